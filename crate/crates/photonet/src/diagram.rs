//! Typed string-diagram intermediate representation.
//!
//! A [`Wiring`] is a port-graph: a topologically ordered list of boxes with
//! explicit wire ids, plus the two boundaries. Every wire has exactly one
//! producer and one consumer, where the `dom` boundary counts as a producer
//! and the `cod` boundary as a consumer. Identities and swaps need no boxes:
//! a wire may run straight from `dom` to `cod`, in any order.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// The four wire types of the calculus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireKind {
    Bit,
    Mode,
    Qubit,
    Qmode,
}

impl WireKind {
    pub fn is_classical(self) -> bool {
        matches!(self, WireKind::Bit | WireKind::Mode)
    }

    pub fn is_quantum(self) -> bool {
        !self.is_classical()
    }

    /// `bit` and `qubit` are two-dimensional; Fock wires get their dimension
    /// from truncation inference.
    pub fn fixed_dim(self) -> Option<u64> {
        match self {
            WireKind::Bit | WireKind::Qubit => Some(2),
            WireKind::Mode | WireKind::Qmode => None,
        }
    }
}

impl fmt::Display for WireKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WireKind::Bit => "bit",
            WireKind::Mode => "mode",
            WireKind::Qubit => "qubit",
            WireKind::Qmode => "qmode",
        };
        write!(f, "{s}")
    }
}

/// A tensor product of wire types; the empty product is the unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ty(pub Vec<WireKind>);

impl Ty {
    pub fn empty() -> Self {
        Ty(Vec::new())
    }

    pub fn single(kind: WireKind) -> Self {
        Ty(vec![kind])
    }

    pub fn repeat(kind: WireKind, n: usize) -> Self {
        Ty(vec![kind; n])
    }

    pub fn of(kinds: &[WireKind]) -> Self {
        Ty(kinds.to_vec())
    }

    pub fn tensor(&self, other: &Ty) -> Ty {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Ty(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = WireKind> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        write!(f, "{}", parts.join(" @ "))
    }
}

pub fn bit() -> Ty {
    Ty::single(WireKind::Bit)
}
pub fn mode() -> Ty {
    Ty::single(WireKind::Mode)
}
pub fn qubit() -> Ty {
    Ty::single(WireKind::Qubit)
}
pub fn qmode() -> Ty {
    Ty::single(WireKind::Qmode)
}

/// Symbol bindings used by substitution.
pub type Bindings = BTreeMap<String, f64>;

/// A real parameter: a literal or an affine function of a named symbol.
///
/// Symbols are real-valued; the affine form keeps the catalog closed under
/// dagger and conjugation, which negate and shift phases.
#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Lit(f64),
    Sym {
        name: String,
        scale: f64,
        offset: f64,
    },
}

impl Param {
    pub fn lit(v: f64) -> Self {
        Param::Lit(v)
    }

    pub fn sym(name: impl Into<String>) -> Self {
        Param::Sym {
            name: name.into(),
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Param::Lit(v) => Some(*v),
            Param::Sym { .. } => None,
        }
    }

    pub fn scaled(&self, k: f64) -> Param {
        match self {
            Param::Lit(v) => Param::Lit(v * k),
            Param::Sym {
                name,
                scale,
                offset,
            } => Param::Sym {
                name: name.clone(),
                scale: scale * k,
                offset: offset * k,
            },
        }
    }

    pub fn shifted(&self, c: f64) -> Param {
        match self {
            Param::Lit(v) => Param::Lit(v + c),
            Param::Sym {
                name,
                scale,
                offset,
            } => Param::Sym {
                name: name.clone(),
                scale: *scale,
                offset: offset + c,
            },
        }
    }

    pub fn neg(&self) -> Param {
        self.scaled(-1.0)
    }

    pub fn substitute(&self, bindings: &Bindings) -> Param {
        match self {
            Param::Lit(_) => self.clone(),
            Param::Sym {
                name,
                scale,
                offset,
            } => match bindings.get(name) {
                Some(v) => Param::Lit(scale * v + offset),
                None => self.clone(),
            },
        }
    }

    pub fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        if let Param::Sym { name, .. } = self {
            out.insert(name.clone());
        }
    }

    /// The symbol's linear coefficient when this parameter mentions `sym`.
    pub fn coefficient_of(&self, sym: &str) -> f64 {
        match self {
            Param::Sym { name, scale, .. } if name == sym => *scale,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Lit(v) => write!(f, "{v}"),
            Param::Sym {
                name,
                scale,
                offset,
            } => {
                if *scale == 1.0 && *offset == 0.0 {
                    write!(f, "{name}")
                } else if *offset == 0.0 {
                    write!(f, "{scale}*{name}")
                } else {
                    write!(f, "{scale}*{name}+{offset}")
                }
            }
        }
    }
}

/// The box interface a [`Wiring`] is generic over.
///
/// Pure diagrams use [`crate::generators::Generator`]; channel diagrams use
/// [`crate::channel::Channel`].
pub trait DiagramBox: Clone + fmt::Debug + PartialEq {
    fn box_name(&self) -> String;
    fn dom(&self) -> Ty;
    fn cod(&self) -> Ty;
    fn dagger(&self) -> Result<Self>;
    /// Entry-wise complex conjugate, keeping dom and cod.
    fn conjugate(&self) -> Self;
    fn substitute(&self, bindings: &Bindings) -> Self;
    fn collect_symbols(&self, out: &mut BTreeSet<String>);
}

/// One box instance inside a wiring, with its input and output wire ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Node<B> {
    pub gen: B,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// A typed directed acyclic wiring of boxes; the universal syntax object.
#[derive(Clone, Debug, PartialEq)]
pub struct Wiring<B> {
    /// Wire id -> wire type.
    wires: Vec<WireKind>,
    /// Topologically ordered boxes.
    nodes: Vec<Node<B>>,
    dom_wires: Vec<usize>,
    cod_wires: Vec<usize>,
    /// Multiset of complex factors multiplied into the final tensor.
    scalars: Vec<Complex64>,
}

impl<B: DiagramBox> Wiring<B> {
    pub fn id(ty: Ty) -> Self {
        let n = ty.len();
        Wiring {
            wires: ty.0,
            nodes: Vec::new(),
            dom_wires: (0..n).collect(),
            cod_wires: (0..n).collect(),
            scalars: Vec::new(),
        }
    }

    /// Boxless permutation: output `j` carries input `perm[j]`.
    pub fn permutation(ty: Ty, perm: &[usize]) -> Result<Self> {
        if perm.len() != ty.len() {
            return Err(Error::InvalidDiagram(format!(
                "permutation length {} does not match type length {}",
                perm.len(),
                ty.len()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidDiagram("not a permutation".into()));
            }
            seen[p] = true;
        }
        Ok(Wiring {
            wires: ty.0,
            nodes: Vec::new(),
            dom_wires: (0..perm.len()).collect(),
            cod_wires: perm.to_vec(),
            scalars: Vec::new(),
        })
    }

    pub fn swap(a: Ty, b: Ty) -> Self {
        let (la, lb) = (a.len(), b.len());
        let ty = a.tensor(&b);
        let perm: Vec<usize> = (la..la + lb).chain(0..la).collect();
        Wiring::permutation(ty, &perm).expect("swap permutation is valid")
    }

    /// A 0 -> 0 diagram carrying a single complex factor.
    pub fn scalar(value: Complex64) -> Self {
        Wiring {
            wires: Vec::new(),
            nodes: Vec::new(),
            dom_wires: Vec::new(),
            cod_wires: Vec::new(),
            scalars: vec![value],
        }
    }

    pub fn from_box(b: B) -> Self {
        let dom = b.dom();
        let cod = b.cod();
        let mut wires = dom.0.clone();
        wires.extend_from_slice(&cod.0);
        let dom_wires: Vec<usize> = (0..dom.len()).collect();
        let cod_wires: Vec<usize> = (dom.len()..dom.len() + cod.len()).collect();
        Wiring {
            wires,
            nodes: vec![Node {
                gen: b,
                inputs: dom_wires.clone(),
                outputs: cod_wires.clone(),
            }],
            dom_wires,
            cod_wires,
            scalars: Vec::new(),
        }
    }

    pub fn dom(&self) -> Ty {
        Ty(self.dom_wires.iter().map(|&w| self.wires[w]).collect())
    }

    pub fn cod(&self) -> Ty {
        Ty(self.cod_wires.iter().map(|&w| self.wires[w]).collect())
    }

    pub fn nodes(&self) -> &[Node<B>] {
        &self.nodes
    }

    pub fn wire_kind(&self, wire: usize) -> WireKind {
        self.wires[wire]
    }

    pub fn wire_count(&self) -> usize {
        self.wires.len()
    }

    pub fn dom_wires(&self) -> &[usize] {
        &self.dom_wires
    }

    pub fn cod_wires(&self) -> &[usize] {
        &self.cod_wires
    }

    pub fn scalars(&self) -> &[Complex64] {
        &self.scalars
    }

    pub fn scalar_product(&self) -> Complex64 {
        self.scalars
            .iter()
            .fold(Complex64::new(1.0, 0.0), |a, b| a * b)
    }

    pub fn push_scalar(&mut self, value: Complex64) {
        self.scalars.push(value);
    }

    /// Sequential composition: `self` followed by `other`.
    pub fn then(&self, other: &Wiring<B>) -> Result<Wiring<B>> {
        let my_cod = self.cod();
        let their_dom = other.dom();
        if my_cod != their_dom {
            let idx = my_cod
                .0
                .iter()
                .zip(their_dom.0.iter())
                .position(|(a, b)| a != b)
                .unwrap_or_else(|| my_cod.len().min(their_dom.len()));
            return Err(Error::TypeMismatch {
                index: idx,
                expected: my_cod.to_string(),
                found: their_dom.to_string(),
            });
        }

        let mut out = self.clone();
        // Map from `other`'s wire ids into the merged arena.
        let mut map: Vec<Option<usize>> = vec![None; other.wires.len()];
        for (i, &w) in other.dom_wires.iter().enumerate() {
            map[w] = Some(self.cod_wires[i]);
        }
        for (w, kind) in other.wires.iter().enumerate() {
            if map[w].is_none() {
                map[w] = Some(out.wires.len());
                out.wires.push(*kind);
            }
        }
        let remap = |w: usize| map[w].expect("wire mapped");
        for node in &other.nodes {
            out.nodes.push(Node {
                gen: node.gen.clone(),
                inputs: node.inputs.iter().map(|&w| remap(w)).collect(),
                outputs: node.outputs.iter().map(|&w| remap(w)).collect(),
            });
        }
        out.cod_wires = other.cod_wires.iter().map(|&w| remap(w)).collect();
        out.scalars.extend_from_slice(&other.scalars);
        Ok(out)
    }

    /// Parallel (monoidal) composition with `self`'s wires first.
    pub fn tensor(&self, other: &Wiring<B>) -> Wiring<B> {
        let offset = self.wires.len();
        let mut out = self.clone();
        out.wires.extend_from_slice(&other.wires);
        for node in &other.nodes {
            out.nodes.push(Node {
                gen: node.gen.clone(),
                inputs: node.inputs.iter().map(|&w| w + offset).collect(),
                outputs: node.outputs.iter().map(|&w| w + offset).collect(),
            });
        }
        out.dom_wires
            .extend(other.dom_wires.iter().map(|&w| w + offset));
        out.cod_wires
            .extend(other.cod_wires.iter().map(|&w| w + offset));
        out.scalars.extend_from_slice(&other.scalars);
        out
    }

    /// Reverses box order, daggers each box, swaps dom and cod, and
    /// conjugates scalars.
    pub fn dagger(&self) -> Result<Wiring<B>> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter().rev() {
            nodes.push(Node {
                gen: node.gen.dagger()?,
                inputs: node.outputs.clone(),
                outputs: node.inputs.clone(),
            });
        }
        Ok(Wiring {
            wires: self.wires.clone(),
            nodes,
            dom_wires: self.cod_wires.clone(),
            cod_wires: self.dom_wires.clone(),
            scalars: self.scalars.iter().map(|s| s.conj()).collect(),
        })
    }

    /// Entry-wise complex conjugate: conjugates each box and each scalar,
    /// keeping the wiring.
    pub fn conjugate(&self) -> Wiring<B> {
        Wiring {
            wires: self.wires.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    gen: n.gen.conjugate(),
                    inputs: n.inputs.clone(),
                    outputs: n.outputs.clone(),
                })
                .collect(),
            dom_wires: self.dom_wires.clone(),
            cod_wires: self.cod_wires.clone(),
            scalars: self.scalars.iter().map(|s| s.conj()).collect(),
        }
    }

    /// Replaces bound symbols with literals; unknown binding names are
    /// reported by [`Wiring::substitute_strict`].
    pub fn substitute(&self, bindings: &Bindings) -> Wiring<B> {
        Wiring {
            wires: self.wires.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    gen: n.gen.substitute(bindings),
                    inputs: n.inputs.clone(),
                    outputs: n.outputs.clone(),
                })
                .collect(),
            dom_wires: self.dom_wires.clone(),
            cod_wires: self.cod_wires.clone(),
            scalars: self.scalars.clone(),
        }
    }

    /// Like [`Wiring::substitute`] but errors when a binding names a symbol
    /// absent from the diagram.
    pub fn substitute_strict(&self, bindings: &Bindings) -> Result<Wiring<B>> {
        let free = self.free_symbols();
        for name in bindings.keys() {
            if !free.contains(name) {
                return Err(Error::UnknownSymbol(name.clone()));
            }
        }
        Ok(self.substitute(bindings))
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for n in &self.nodes {
            n.gen.collect_symbols(&mut out);
        }
        out
    }

    /// Full re-check of the port-graph invariants: one producer and one
    /// consumer per wire, matching types, topological node order.
    pub fn validate(&self) -> Result<()> {
        let n = self.wires.len();
        let mut produced = vec![0usize; n];
        let mut consumed = vec![0usize; n];
        let mut ready = vec![false; n];
        for &w in &self.dom_wires {
            produced[w] += 1;
            ready[w] = true;
        }
        for node in &self.nodes {
            let dom = node.gen.dom();
            let cod = node.gen.cod();
            if dom.len() != node.inputs.len() || cod.len() != node.outputs.len() {
                return Err(Error::InvalidDiagram(format!(
                    "box `{}` arity does not match its wiring",
                    node.gen.box_name()
                )));
            }
            for (i, &w) in node.inputs.iter().enumerate() {
                if self.wires[w] != dom.0[i] {
                    return Err(Error::TypeMismatch {
                        index: i,
                        expected: dom.0[i].to_string(),
                        found: self.wires[w].to_string(),
                    });
                }
                if !ready[w] {
                    return Err(Error::InvalidDiagram(format!(
                        "box `{}` consumes a wire before it is produced",
                        node.gen.box_name()
                    )));
                }
                consumed[w] += 1;
            }
            for (i, &w) in node.outputs.iter().enumerate() {
                if self.wires[w] != cod.0[i] {
                    return Err(Error::TypeMismatch {
                        index: i,
                        expected: cod.0[i].to_string(),
                        found: self.wires[w].to_string(),
                    });
                }
                produced[w] += 1;
                ready[w] = true;
            }
        }
        for &w in &self.cod_wires {
            consumed[w] += 1;
        }
        for w in 0..n {
            if produced[w] != 1 || consumed[w] != 1 {
                return Err(Error::InvalidDiagram(format!(
                    "wire {w} has {} producers and {} consumers",
                    produced[w], consumed[w]
                )));
            }
        }
        Ok(())
    }

    /// Builds a diagram in function syntax: the callback receives one handle
    /// per `dom` factor and must return the output handles, consuming each
    /// input exactly once.
    pub fn build<F>(dom: Ty, f: F) -> Result<Wiring<B>>
    where
        F: FnOnce(&mut Builder<B>, Vec<WireHandle>) -> Result<Vec<WireHandle>>,
    {
        let (mut builder, inputs) = Builder::new(dom);
        let outputs = f(&mut builder, inputs)?;
        builder.finish(outputs)
    }

    /// Splices `sub` in place of node `index`; `sub` must have the same
    /// boundary as the replaced box.
    pub fn replace_node(&self, index: usize, sub: &Wiring<B>) -> Result<Wiring<B>> {
        let node = &self.nodes[index];
        if sub.dom() != node.gen.dom() || sub.cod() != node.gen.cod() {
            return Err(Error::InvalidDiagram(format!(
                "replacement boundary {} -> {} differs from box `{}`",
                sub.dom(),
                sub.cod(),
                node.gen.box_name()
            )));
        }
        let mut out = Wiring {
            wires: self.wires.clone(),
            nodes: Vec::with_capacity(self.nodes.len() + sub.nodes.len()),
            dom_wires: self.dom_wires.clone(),
            cod_wires: self.cod_wires.clone(),
            scalars: self.scalars.clone(),
        };
        // Map sub's wires into the arena: boundary wires onto the replaced
        // node's wires, internal wires fresh. A sub wire that is both dom and
        // cod (pass-through) identifies the node's input with its output, so
        // resolve dom first and let cod chase the map.
        let mut map: Vec<Option<usize>> = vec![None; sub.wires.len()];
        for (i, &w) in sub.dom_wires.iter().enumerate() {
            map[w] = Some(node.inputs[i]);
        }
        let mut alias: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &w) in sub.cod_wires.iter().enumerate() {
            match map[w] {
                None => map[w] = Some(node.outputs[i]),
                // Pass-through: the outer output wire must be rewritten to the
                // outer input wire everywhere downstream.
                Some(existing) => {
                    alias.insert(node.outputs[i], existing);
                }
            }
        }
        for (w, kind) in sub.wires.iter().enumerate() {
            if map[w].is_none() {
                map[w] = Some(out.wires.len());
                out.wires.push(*kind);
            }
        }
        let remap = |w: usize| map[w].expect("wire mapped");
        for (i, n) in self.nodes.iter().enumerate() {
            if i == index {
                for sn in &sub.nodes {
                    out.nodes.push(Node {
                        gen: sn.gen.clone(),
                        inputs: sn.inputs.iter().map(|&w| remap(w)).collect(),
                        outputs: sn.outputs.iter().map(|&w| remap(w)).collect(),
                    });
                }
            } else {
                out.nodes.push(n.clone());
            }
        }
        out.scalars.extend_from_slice(&sub.scalars);
        if !alias.is_empty() {
            let fix = |w: usize| *alias.get(&w).unwrap_or(&w);
            for n in &mut out.nodes {
                for w in n.inputs.iter_mut().chain(n.outputs.iter_mut()) {
                    *w = fix(*w);
                }
            }
            for w in out.cod_wires.iter_mut() {
                *w = fix(*w);
            }
            out.compact();
        }
        Ok(out)
    }

    /// Renumbers wires so that only referenced ids remain in the arena.
    fn compact(&mut self) {
        let mut used = vec![false; self.wires.len()];
        let mark = |used: &mut Vec<bool>, ws: &[usize]| {
            for &w in ws {
                used[w] = true;
            }
        };
        mark(&mut used, &self.dom_wires);
        mark(&mut used, &self.cod_wires);
        for n in &self.nodes {
            mark(&mut used, &n.inputs);
            mark(&mut used, &n.outputs);
        }
        let mut map = vec![usize::MAX; self.wires.len()];
        let mut wires = Vec::new();
        for (w, &u) in used.iter().enumerate() {
            if u {
                map[w] = wires.len();
                wires.push(self.wires[w]);
            }
        }
        self.wires = wires;
        for w in self.dom_wires.iter_mut().chain(self.cod_wires.iter_mut()) {
            *w = map[*w];
        }
        for n in &mut self.nodes {
            for w in n.inputs.iter_mut().chain(n.outputs.iter_mut()) {
                *w = map[*w];
            }
        }
    }
}

/// An opaque handle to a live wire inside a [`Builder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireHandle(usize);

/// Incremental diagram construction with named wires; inserts the effect of
/// swaps automatically because wires are routed by id.
pub struct Builder<B> {
    wires: Vec<WireKind>,
    nodes: Vec<Node<B>>,
    dom_wires: Vec<usize>,
    scalars: Vec<Complex64>,
    /// Wires produced but not yet consumed.
    live: BTreeSet<usize>,
}

impl<B: DiagramBox> Builder<B> {
    pub fn new(dom: Ty) -> (Self, Vec<WireHandle>) {
        let n = dom.len();
        let builder = Builder {
            wires: dom.0,
            nodes: Vec::new(),
            dom_wires: (0..n).collect(),
            scalars: Vec::new(),
            live: (0..n).collect(),
        };
        let handles = (0..n).map(WireHandle).collect();
        (builder, handles)
    }

    fn consume(&mut self, h: WireHandle) -> Result<usize> {
        if !self.live.remove(&h.0) {
            return Err(Error::WireReuse);
        }
        Ok(h.0)
    }

    fn fresh(&mut self, kind: WireKind) -> WireHandle {
        let id = self.wires.len();
        self.wires.push(kind);
        self.live.insert(id);
        WireHandle(id)
    }

    pub fn add_scalar(&mut self, value: Complex64) {
        self.scalars.push(value);
    }

    /// Applies a box to the given wires, returning handles for its outputs.
    pub fn apply(&mut self, gen: B, inputs: &[WireHandle]) -> Result<Vec<WireHandle>> {
        let dom = gen.dom();
        if dom.len() != inputs.len() {
            return Err(Error::InvalidDiagram(format!(
                "box `{}` expects {} inputs, got {}",
                gen.box_name(),
                dom.len(),
                inputs.len()
            )));
        }
        for (i, h) in inputs.iter().enumerate() {
            let kind = self.wires[h.0];
            if kind != dom.0[i] {
                return Err(Error::TypeMismatch {
                    index: i,
                    expected: dom.0[i].to_string(),
                    found: kind.to_string(),
                });
            }
        }
        let mut in_ids = Vec::with_capacity(inputs.len());
        for &h in inputs {
            in_ids.push(self.consume(h)?);
        }
        let outs: Vec<WireHandle> = gen.cod().iter().map(|k| self.fresh(k)).collect();
        self.nodes.push(Node {
            gen,
            inputs: in_ids,
            outputs: outs.iter().map(|h| h.0).collect(),
        });
        Ok(outs)
    }

    /// Inlines a whole sub-diagram, wiring its dom onto `inputs`.
    pub fn apply_diagram(&mut self, d: &Wiring<B>, inputs: &[WireHandle]) -> Result<Vec<WireHandle>> {
        let dom = d.dom();
        if dom.len() != inputs.len() {
            return Err(Error::InvalidDiagram(format!(
                "sub-diagram expects {} inputs, got {}",
                dom.len(),
                inputs.len()
            )));
        }
        for (i, h) in inputs.iter().enumerate() {
            let kind = self.wires[h.0];
            if kind != dom.0[i] {
                return Err(Error::TypeMismatch {
                    index: i,
                    expected: dom.0[i].to_string(),
                    found: kind.to_string(),
                });
            }
        }
        let mut map: Vec<Option<usize>> = vec![None; d.wires.len()];
        for (i, &w) in d.dom_wires.iter().enumerate() {
            map[w] = Some(inputs[i].0);
        }
        for node in &d.nodes {
            let mut in_handles = Vec::with_capacity(node.inputs.len());
            for &w in &node.inputs {
                let id = map[w].expect("sub-diagram is topologically ordered");
                if !self.live.remove(&id) {
                    return Err(Error::WireReuse);
                }
                in_handles.push(id);
            }
            let mut out_ids = Vec::with_capacity(node.outputs.len());
            for &w in &node.outputs {
                let h = self.fresh(d.wires[w]);
                map[w] = Some(h.0);
                out_ids.push(h.0);
            }
            self.nodes.push(Node {
                gen: node.gen.clone(),
                inputs: in_handles,
                outputs: out_ids,
            });
        }
        self.scalars.extend_from_slice(&d.scalars);
        Ok(d
            .cod_wires
            .iter()
            .map(|&w| WireHandle(map[w].expect("cod wire mapped")))
            .collect())
    }

    pub fn finish(mut self, outputs: Vec<WireHandle>) -> Result<Wiring<B>> {
        let mut cod_wires = Vec::with_capacity(outputs.len());
        for h in outputs {
            if !self.live.remove(&h.0) {
                return Err(Error::WireReuse);
            }
            cod_wires.push(h.0);
        }
        if !self.live.is_empty() {
            return Err(Error::WireDropped);
        }
        Ok(Wiring {
            wires: self.wires,
            nodes: self.nodes,
            dom_wires: self.dom_wires,
            cod_wires,
            scalars: self.scalars,
        })
    }
}

/// A formal sum of diagrams with identical boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Sum<B> {
    terms: Vec<Wiring<B>>,
}

impl<B: DiagramBox> Sum<B> {
    pub fn new(terms: Vec<Wiring<B>>) -> Result<Self> {
        let first = terms.first().ok_or(Error::EmptySum)?;
        let (dom, cod) = (first.dom(), first.cod());
        for t in &terms[1..] {
            if t.dom() != dom || t.cod() != cod {
                return Err(Error::TypeMismatch {
                    index: 0,
                    expected: format!("{} -> {}", dom, cod),
                    found: format!("{} -> {}", t.dom(), t.cod()),
                });
            }
        }
        Ok(Sum { terms })
    }

    pub fn from_term(term: Wiring<B>) -> Self {
        Sum { terms: vec![term] }
    }

    pub fn terms(&self) -> &[Wiring<B>] {
        &self.terms
    }

    pub fn dom(&self) -> Ty {
        self.terms[0].dom()
    }

    pub fn cod(&self) -> Ty {
        self.terms[0].cod()
    }

    pub fn add(&self, other: &Sum<B>) -> Result<Sum<B>> {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Sum::new(terms)
    }

    pub fn then(&self, other: &Sum<B>) -> Result<Sum<B>> {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.then(b)?);
            }
        }
        Sum::new(terms)
    }

    pub fn tensor(&self, other: &Sum<B>) -> Result<Sum<B>> {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.tensor(b));
            }
        }
        Sum::new(terms)
    }

    pub fn dagger(&self) -> Result<Sum<B>> {
        Sum::new(
            self.terms
                .iter()
                .map(|t| t.dagger())
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn substitute(&self, bindings: &Bindings) -> Sum<B> {
        Sum {
            terms: self.terms.iter().map(|t| t.substitute(bindings)).collect(),
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            out.extend(t.free_symbols());
        }
        out
    }

    pub fn scale(&self, factor: Complex64) -> Sum<B> {
        Sum {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.push_scalar(factor);
                    t
                })
                .collect(),
        }
    }
}
