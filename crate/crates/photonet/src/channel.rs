//! Classical-quantum channels: Kraus diagrams, doubling into pure diagrams,
//! measure/encode/discard, noise channels, and the distinguishability
//! inflation functor.
//!
//! A [`Channel`] is one Kraus map given as a pure [`Diagram`], possibly with
//! trailing environment outputs that are traced out. Doubling replaces each
//! channel box by its Kraus diagram tensored with the conjugate copy: quantum
//! wires become index pairs, classical wires are shared between the copies
//! through copy/compare spiders, and environment pairs are closed with caps.

use crate::diagram::{Bindings, DiagramBox, Ty, WireHandle, WireKind, Wiring};
use crate::error::{Error, Result};
use crate::generators::{self as gen, Diagram, Generator};
use crate::tn::{self, TnOptions};
use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};

/// How a channel behaves under structural transformations (inflation,
/// backend eligibility); the Kraus diagram alone fixes the semantics.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelKind {
    /// Env-free Kraus map.
    Pure,
    /// Occupation-basis measurement on one quantum wire.
    MeasureWire,
    /// State preparation from one classical wire.
    EncodeWire,
    /// Trace-out of one wire.
    DiscardWire,
    /// Uniform photon loss with survival probability `p`.
    PhotonLoss(f64),
    /// Anything else (custom Kraus + environment).
    Custom,
}

/// A classical-quantum map: a named Kraus diagram plus the split of its
/// codomain into visible outputs and discarded environment wires.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: String,
    pub kraus: Diagram,
    pub env: Ty,
    pub kind: ChannelKind,
}

impl Channel {
    /// An env-free channel: the doubled box is `kraus (x) conj(kraus)`.
    pub fn from_kraus(name: impl Into<String>, kraus: Diagram) -> Self {
        Channel {
            name: name.into(),
            kraus,
            env: Ty::empty(),
            kind: ChannelKind::Pure,
        }
    }

    /// A channel whose Kraus map has `env` trailing environment outputs.
    pub fn with_env(name: impl Into<String>, kraus: Diagram, env: Ty) -> Result<Self> {
        let cod = kraus.cod();
        if env.len() > cod.len() || cod.0[cod.len() - env.len()..] != env.0[..] {
            return Err(Error::InvalidDiagram(
                "environment does not match the Kraus codomain tail".into(),
            ));
        }
        Ok(Channel {
            name: name.into(),
            kraus,
            env,
            kind: ChannelKind::Custom,
        })
    }

    fn with_kind(mut self, kind: ChannelKind) -> Self {
        self.kind = kind;
        self
    }

    /// Marks a cast channel as a per-wire measurement (used by structural
    /// functors such as inflation).
    pub fn with_kind_measure(self) -> Self {
        self.with_kind(ChannelKind::MeasureWire)
    }
}

impl DiagramBox for Channel {
    fn box_name(&self) -> String {
        self.name.clone()
    }

    fn dom(&self) -> Ty {
        self.kraus.dom()
    }

    fn cod(&self) -> Ty {
        let cod = self.kraus.cod();
        Ty(cod.0[..cod.len() - self.env.len()].to_vec())
    }

    fn dagger(&self) -> Result<Self> {
        if !self.env.is_empty() {
            return Err(Error::DaggerUndefined(self.name.clone()));
        }
        let kind = match self.kind {
            ChannelKind::MeasureWire => ChannelKind::EncodeWire,
            ChannelKind::EncodeWire => ChannelKind::MeasureWire,
            ref k => k.clone(),
        };
        Ok(Channel {
            name: format!("{}†", self.name),
            kraus: self.kraus.dagger()?,
            env: Ty::empty(),
            kind,
        })
    }

    fn conjugate(&self) -> Self {
        Channel {
            name: self.name.clone(),
            kraus: self.kraus.conjugate(),
            env: self.env.clone(),
            kind: self.kind.clone(),
        }
    }

    fn substitute(&self, bindings: &Bindings) -> Self {
        Channel {
            name: self.name.clone(),
            kraus: self.kraus.substitute(bindings),
            env: self.env.clone(),
            kind: self.kind.clone(),
        }
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        out.extend(self.kraus.free_symbols());
    }
}

/// A diagram whose boxes are channels.
pub type ChannelDiagram = Wiring<Channel>;

/// Wraps a single pure diagram as a one-box channel diagram.
pub fn pure_channel(name: impl Into<String>, kraus: Diagram) -> ChannelDiagram {
    Wiring::from_box(Channel::from_kraus(name, kraus))
}

/// Lifts a pure diagram box-by-box into a channel diagram, preserving the
/// wiring; diagram scalars become scalar channel boxes (so they double).
pub fn lift_pure(d: &Diagram) -> ChannelDiagram {
    let mut out = ChannelDiagram::build(d.dom(), |b, handles| {
        let mut map: BTreeMap<usize, WireHandle> = d
            .dom_wires()
            .iter()
            .copied()
            .zip(handles)
            .collect();
        for node in d.nodes() {
            let ins: Vec<WireHandle> = node.inputs.iter().map(|w| map[w]).collect();
            let boxed = Wiring::from_box(node.gen.clone());
            let ch = Channel::from_kraus(node.gen.box_name(), boxed);
            let outs = b.apply(ch, &ins)?;
            for (w, h) in node.outputs.iter().zip(outs) {
                map.insert(*w, h);
            }
        }
        Ok(d.cod_wires().iter().map(|w| map[w]).collect())
    })
    .expect("pure diagram is well-formed");
    for &s in d.scalars() {
        let scalar_box = Channel::from_kraus("Scalar", Diagram::scalar(s));
        out = out
            .tensor(&Wiring::from_box(scalar_box))
            .clone();
    }
    out
}

/// Boundary layout of a doubled type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorInfo {
    pub kind: WireKind,
    pub quantum: bool,
    pub dim: u64,
}

fn doubled_ty(ty: &Ty) -> Ty {
    let mut out = Vec::new();
    for k in ty.iter() {
        out.push(k);
        if k.is_quantum() {
            out.push(k);
        }
    }
    Ty(out)
}

fn copy_spider(kind: WireKind) -> Generator {
    Generator::ZSpider {
        wire: kind,
        n_in: 1,
        n_out: 2,
        phase: crate::diagram::Param::lit(0.0),
    }
}

fn compare_spider(kind: WireKind) -> Generator {
    Generator::ZSpider {
        wire: kind,
        n_in: 2,
        n_out: 1,
        phase: crate::diagram::Param::lit(0.0),
    }
}

fn cap_spider(kind: WireKind) -> Generator {
    Generator::ZSpider {
        wire: kind,
        n_in: 2,
        n_out: 0,
        phase: crate::diagram::Param::lit(0.0),
    }
}

/// Lowers a channel diagram to a pure diagram evaluating the completely
/// positive map: quantum wires double, classical wires are shared via
/// copy/compare, environments close with caps.
pub fn double(cd: &ChannelDiagram) -> Result<Diagram> {
    #[derive(Clone)]
    enum Dw {
        Classical(WireHandle),
        Quantum(WireHandle, WireHandle),
    }

    Diagram::build(doubled_ty(&cd.dom()), |b, handles| {
        for &s in cd.scalars() {
            b.add_scalar(s);
        }
        let mut map: BTreeMap<usize, Dw> = BTreeMap::new();
        let mut it = handles.into_iter();
        for &w in cd.dom_wires() {
            let kind = cd.wire_kind(w);
            let dw = if kind.is_quantum() {
                Dw::Quantum(it.next().unwrap(), it.next().unwrap())
            } else {
                Dw::Classical(it.next().unwrap())
            };
            map.insert(w, dw);
        }

        for node in cd.nodes() {
            let ch = &node.gen;
            let mut ket_in = Vec::new();
            let mut bra_in = Vec::new();
            for &w in &node.inputs {
                match map[&w].clone() {
                    Dw::Quantum(k, r) => {
                        ket_in.push(k);
                        bra_in.push(r);
                    }
                    Dw::Classical(h) => {
                        let copies = b.apply(copy_spider(cd.wire_kind(w)), &[h])?;
                        ket_in.push(copies[0]);
                        bra_in.push(copies[1]);
                    }
                }
            }
            let ket_out = b.apply_diagram(&ch.kraus, &ket_in)?;
            let bra_out = b.apply_diagram(&ch.kraus.conjugate(), &bra_in)?;
            let cod = ch.cod();
            for (i, (&k, &r)) in ket_out.iter().zip(bra_out.iter()).enumerate() {
                if i < cod.len() {
                    let kind = cod.0[i];
                    let dw = if kind.is_quantum() {
                        Dw::Quantum(k, r)
                    } else {
                        let merged = b.apply(compare_spider(kind), &[k, r])?;
                        Dw::Classical(merged[0])
                    };
                    map.insert(node.outputs[i], dw);
                } else {
                    let kind = ch.env.0[i - cod.len()];
                    b.apply(cap_spider(kind), &[k, r])?;
                }
            }
        }

        let mut out = Vec::new();
        for &w in cd.cod_wires() {
            match map[&w].clone() {
                Dw::Quantum(k, r) => {
                    out.push(k);
                    out.push(r);
                }
                Dw::Classical(h) => out.push(h),
            }
        }
        Ok(out)
    })
}

impl Wiring<Channel> {
    /// Concatenates the Kraus maps into one pure diagram. Fails on channels
    /// with environments or measurement casts, whose semantics need doubling.
    pub fn as_pure(&self) -> Result<Diagram> {
        Diagram::build(self.dom(), |b, handles| {
            for &s in self.scalars() {
                b.add_scalar(s);
            }
            let mut map: BTreeMap<usize, WireHandle> = self
                .dom_wires()
                .iter()
                .copied()
                .zip(handles)
                .collect();
            for node in self.nodes() {
                let ch = &node.gen;
                if !ch.env.is_empty() {
                    return Err(Error::NotPure(ch.name.clone()));
                }
                for n in ch.kraus.nodes() {
                    if let Generator::Cast { from, .. } = &n.gen {
                        if from.is_quantum() {
                            return Err(Error::NotPure(ch.name.clone()));
                        }
                    }
                }
                let ins: Vec<WireHandle> = node.inputs.iter().map(|w| map[w]).collect();
                let outs = b.apply_diagram(&ch.kraus, &ins)?;
                for (w, h) in node.outputs.iter().zip(outs) {
                    map.insert(*w, h);
                }
            }
            Ok(self.cod_wires().iter().map(|w| map[w]).collect())
        })
    }

    /// Evaluates the doubled diagram on the tensor-network backend.
    pub fn eval(&self) -> Result<EvalResult> {
        self.eval_with(&TnOptions::default())
    }

    pub fn eval_with(&self, opts: &TnOptions) -> Result<EvalResult> {
        let doubled = double(self)?;
        let ev = tn::eval_diagram_with(&doubled, opts)?;
        let dom_factors = factor_infos(&self.dom(), &ev.dom_dims)?;
        let cod_factors = factor_infos(&self.cod(), &ev.cod_dims)?;
        Ok(EvalResult {
            tensor: ev.tensor,
            dom_factors,
            cod_factors,
            doubled: true,
        })
    }

    /// Evaluates the undoubled Kraus composite; only meaningful for pure
    /// diagrams (errors otherwise).
    pub fn eval_pure(&self) -> Result<EvalResult> {
        self.eval_pure_with(&TnOptions::default())
    }

    pub fn eval_pure_with(&self, opts: &TnOptions) -> Result<EvalResult> {
        let pure = self.as_pure()?;
        let ev = tn::eval_diagram_with(&pure, opts)?;
        let dom_factors = pure_factor_infos(&self.dom(), &ev.dom_dims);
        let cod_factors = pure_factor_infos(&self.cod(), &ev.cod_dims);
        Ok(EvalResult {
            tensor: ev.tensor,
            dom_factors,
            cod_factors,
            doubled: false,
        })
    }
}

fn factor_infos(ty: &Ty, dims: &[u64]) -> Result<Vec<FactorInfo>> {
    let mut out = Vec::new();
    let mut i = 0;
    for kind in ty.iter() {
        if kind.is_quantum() {
            if dims[i] != dims[i + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "ket/bra dimensions differ: {} vs {}",
                    dims[i],
                    dims[i + 1]
                )));
            }
            out.push(FactorInfo {
                kind,
                quantum: true,
                dim: dims[i],
            });
            i += 2;
        } else {
            out.push(FactorInfo {
                kind,
                quantum: false,
                dim: dims[i],
            });
            i += 1;
        }
    }
    Ok(out)
}

fn pure_factor_infos(ty: &Ty, dims: &[u64]) -> Vec<FactorInfo> {
    ty.iter()
        .zip(dims)
        .map(|(kind, &dim)| FactorInfo {
            kind,
            quantum: kind.is_quantum(),
            dim,
        })
        .collect()
}

/// A contracted boundary tensor with typed views.
///
/// For doubled results, quantum factors occupy adjacent (ket, bra) axis
/// pairs; classical factors occupy one axis. Pure results have one axis per
/// factor and hold amplitudes.
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub tensor: ArrayD<Complex64>,
    pub dom_factors: Vec<FactorInfo>,
    pub cod_factors: Vec<FactorInfo>,
    pub doubled: bool,
}

impl EvalResult {
    pub fn scalar(&self) -> Result<Complex64> {
        if self.tensor.ndim() != 0 {
            return Err(Error::ShapeMismatch(format!(
                "expected a scalar, found rank {}",
                self.tensor.ndim()
            )));
        }
        Ok(self.tensor[IxDyn(&[])])
    }

    /// Amplitude of one outcome over the cod factors (pure results only).
    pub fn amplitude(&self, outcome: &[u64]) -> Result<Complex64> {
        if self.doubled {
            return Err(Error::NotPure("doubled result".into()));
        }
        if !self.dom_factors.is_empty() {
            return Err(Error::ShapeMismatch("diagram has open inputs".into()));
        }
        let idx: Vec<usize> = outcome.iter().map(|&v| v as usize).collect();
        Ok(self.tensor[idx.as_slice()])
    }

    /// Unnormalized outcome weights over the cod factors: diagonal entries
    /// for quantum factors, raw entries for classical ones.
    pub fn weights(&self) -> Result<BTreeMap<Vec<u64>, f64>> {
        if !self.dom_factors.is_empty() {
            return Err(Error::ShapeMismatch("diagram has open inputs".into()));
        }
        let caps: Vec<u64> = self.cod_factors.iter().map(|f| f.dim).collect();
        let mut out = BTreeMap::new();
        for outcome in gen::enumerate_states(&caps) {
            let mut idx = Vec::new();
            for (f, &v) in self.cod_factors.iter().zip(outcome.iter()) {
                idx.push(v as usize);
                if f.quantum && self.doubled {
                    idx.push(v as usize);
                }
            }
            let entry = self.tensor[idx.as_slice()];
            let w = if self.doubled {
                if entry.im.abs() > 1e-9 * entry.norm().max(1.0) {
                    return Err(Error::NotAState(format!(
                        "weight has imaginary part {:.3e}",
                        entry.im
                    )));
                }
                entry.re
            } else {
                entry.norm_sqr()
            };
            out.insert(outcome, w);
        }
        Ok(out)
    }

    /// Probability distribution over classical outcomes, normalized by the
    /// total weight (post-selected diagrams are sub-normalized; see
    /// [`EvalResult::weights`] for the raw values).
    pub fn prob_dist(&self) -> Result<BTreeMap<Vec<u64>, f64>> {
        let weights = self.weights()?;
        let total: f64 = weights.values().sum();
        if total <= 0.0 {
            return Err(Error::NotAState(format!(
                "total outcome weight {total} is not positive"
            )));
        }
        Ok(weights.into_iter().map(|(k, v)| (k, v / total)).collect())
    }

    /// The density matrix over an all-quantum codomain (doubled results with
    /// no open inputs).
    pub fn density_matrix(&self) -> Result<Array2<Complex64>> {
        if !self.doubled {
            return Err(Error::ShapeMismatch(
                "density matrix needs a doubled result".into(),
            ));
        }
        if !self.dom_factors.is_empty() {
            return Err(Error::ShapeMismatch("diagram has open inputs".into()));
        }
        if self.cod_factors.iter().any(|f| !f.quantum) {
            return Err(Error::ShapeMismatch(
                "density matrix needs an all-quantum codomain".into(),
            ));
        }
        let dims: Vec<u64> = self.cod_factors.iter().map(|f| f.dim).collect();
        let total: usize = dims.iter().map(|&d| d as usize).product();
        let mut rho = Array2::zeros((total, total));
        for ket in gen::enumerate_states(&dims) {
            for bra in gen::enumerate_states(&dims) {
                let mut idx = Vec::new();
                for (k, r) in ket.iter().zip(bra.iter()) {
                    idx.push(*k as usize);
                    idx.push(*r as usize);
                }
                let row = flatten_index(&ket, &dims);
                let col = flatten_index(&bra, &dims);
                rho[(row, col)] = self.tensor[idx.as_slice()];
            }
        }
        Ok(rho)
    }
}

fn flatten_index(values: &[u64], dims: &[u64]) -> usize {
    let mut out = 0usize;
    for (v, d) in values.iter().zip(dims) {
        out = out * (*d as usize) + *v as usize;
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical channels
// ---------------------------------------------------------------------------

/// Occupation-basis measurement: `qubit^m -> bit^m`, `qmode^m -> mode^m`.
/// Built wire-by-wire so structural functors can act locally.
pub fn measure(ty: &Ty) -> Result<ChannelDiagram> {
    let mut out = ChannelDiagram::id(Ty::empty());
    for kind in ty.iter() {
        let to = match kind {
            WireKind::Qubit => WireKind::Bit,
            WireKind::Qmode => WireKind::Mode,
            other => {
                return Err(Error::TypeMismatch {
                    index: 0,
                    expected: "quantum type".into(),
                    found: other.to_string(),
                })
            }
        };
        let ch = Channel::from_kraus("Measure", gen::cast(kind, to))
            .with_kind(ChannelKind::MeasureWire);
        out = out.tensor(&Wiring::from_box(ch));
    }
    Ok(out)
}

/// State preparation from classical data; the dagger of [`measure`].
pub fn encode(ty: &Ty) -> Result<ChannelDiagram> {
    let mut out = ChannelDiagram::id(Ty::empty());
    for kind in ty.iter() {
        let to = match kind {
            WireKind::Bit => WireKind::Qubit,
            WireKind::Mode => WireKind::Qmode,
            other => {
                return Err(Error::TypeMismatch {
                    index: 0,
                    expected: "classical type".into(),
                    found: other.to_string(),
                })
            }
        };
        let ch = Channel::from_kraus("Encode", gen::cast(kind, to))
            .with_kind(ChannelKind::EncodeWire);
        out = out.tensor(&Wiring::from_box(ch));
    }
    Ok(out)
}

/// Traces out (quantum) or deletes (classical) every factor of `ty`.
pub fn discard(ty: &Ty) -> ChannelDiagram {
    let mut out = ChannelDiagram::id(Ty::empty());
    for kind in ty.iter() {
        let single = Ty::single(kind);
        let ch = Channel {
            name: "Discard".into(),
            kraus: Diagram::id(single.clone()),
            env: single,
            kind: ChannelKind::DiscardWire,
        };
        out = out.tensor(&Wiring::from_box(ch));
    }
    out
}

/// A scalar channel: the Kraus scalar `s` contributes `|s|^2` after doubling.
pub fn scalar(s: Complex64) -> ChannelDiagram {
    pure_channel("Scalar", Diagram::scalar(s))
}

/// Photon loss: each photon independently survives with probability `p`,
/// realized as a beamsplitter of transmission amplitude `sqrt(p)` into a
/// discarded environment mode.
pub fn photon_loss(p: f64) -> Result<ChannelDiagram> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::RangeError(p));
    }
    let theta = p.sqrt().acos() / (2.0 * std::f64::consts::PI);
    let kraus = gen::create(&[0])
        .tensor(&Diagram::id(crate::diagram::qmode()))
        .then(&Diagram::swap(crate::diagram::qmode(), crate::diagram::qmode()))
        .unwrap()
        .then(&gen::tbs(crate::diagram::Param::lit(theta)))
        .unwrap();
    let ch = Channel {
        name: format!("PhotonLoss({p})"),
        kraus,
        env: crate::diagram::qmode(),
        kind: ChannelKind::PhotonLoss(p),
    };
    Ok(Wiring::from_box(ch))
}

fn cnot_kraus() -> Diagram {
    // control @ target; scalar sqrt(2) normalizes the spider pair.
    let z12 = gen::z(WireKind::Qubit, 1, 2, crate::diagram::Param::lit(0.0));
    let x21 = gen::x(WireKind::Qubit, 2, 1, crate::diagram::Param::lit(0.0));
    let idq = Diagram::id(crate::diagram::qubit());
    let mut d = z12
        .tensor(&idq)
        .then(&idq.tensor(&x21))
        .unwrap();
    d.push_scalar(Complex64::new(2f64.sqrt(), 0.0));
    d
}

fn cz_kraus() -> Diagram {
    let idq = Diagram::id(crate::diagram::qubit());
    let h = gen::hadamard();
    idq.tensor(&h)
        .then(&cnot_kraus())
        .unwrap()
        .then(&idq.tensor(&h))
        .unwrap()
}

fn error_env_prep(p: f64) -> Diagram {
    // sqrt(1-p)|0> + (phase)*sqrt(p)|1>; the phase cancels after doubling.
    let alpha = (1.0 - 2.0 * p).clamp(-1.0, 1.0).acos() / (2.0 * std::f64::consts::PI);
    let mut d = gen::x(WireKind::Qubit, 0, 1, crate::diagram::Param::lit(alpha));
    d.push_scalar(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    d
}

/// Bit-flip channel `(1-p) rho + p X rho X` on one qubit.
pub fn bit_flip(p: f64) -> Result<ChannelDiagram> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::RangeError(p));
    }
    let idq = Diagram::id(crate::diagram::qubit());
    // (env-prep @ id) >> CNOT(env -> target) >> swap to put env last.
    let kraus = error_env_prep(p)
        .tensor(&idq)
        .then(&cnot_kraus())
        .unwrap()
        .then(&Diagram::swap(crate::diagram::qubit(), crate::diagram::qubit()))
        .unwrap();
    let ch = Channel {
        name: format!("BitFlipError({p})"),
        kraus,
        env: crate::diagram::qubit(),
        kind: ChannelKind::Custom,
    };
    Ok(Wiring::from_box(ch))
}

/// Dephasing channel `(1-p) rho + p Z rho Z` on one qubit.
pub fn dephasing(p: f64) -> Result<ChannelDiagram> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::RangeError(p));
    }
    let kraus = error_env_prep(p)
        .tensor(&Diagram::id(crate::diagram::qubit()))
        .then(&cz_kraus())
        .unwrap()
        .then(&Diagram::swap(crate::diagram::qubit(), crate::diagram::qubit()))
        .unwrap();
    let ch = Channel {
        name: format!("DephasingError({p})"),
        kraus,
        env: crate::diagram::qubit(),
        kind: ChannelKind::Custom,
    };
    Ok(Wiring::from_box(ch))
}

/// `<target| rho |target>`: for pure targets this equals the Uhlmann
/// fidelity. Checks that `rho` is Hermitian, PSD and trace-1 to 1e-8 and the
/// target has unit norm.
pub fn fidelity(rho: &Array2<Complex64>, target: &[Complex64]) -> Result<f64> {
    let (r, c) = rho.dim();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    if target.len() != r {
        return Err(Error::ShapeMismatch(format!(
            "target length {} vs matrix size {r}",
            target.len()
        )));
    }
    let tnorm: f64 = target.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (tnorm - 1.0).abs() > 1e-8 {
        return Err(Error::NormError((tnorm - 1.0).abs()));
    }
    let mut trace = Complex64::new(0.0, 0.0);
    for i in 0..r {
        trace += rho[(i, i)];
    }
    if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::NotAState(format!("trace = {trace}")));
    }
    for i in 0..r {
        for j in 0..r {
            if (rho[(i, j)] - rho[(j, i)].conj()).norm() > 1e-8 {
                return Err(Error::NotAState("not Hermitian".into()));
            }
        }
    }
    let eigs = hermitian_eigenvalues(rho);
    if eigs.iter().any(|&e| e < -1e-8) {
        return Err(Error::NotAState(format!(
            "negative eigenvalue {:.3e}",
            eigs.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    let mut val = Complex64::new(0.0, 0.0);
    for i in 0..r {
        for j in 0..r {
            val += target[i].conj() * rho[(i, j)] * target[j];
        }
    }
    Ok(val.re)
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations.
pub fn hermitian_eigenvalues(a: &Array2<Complex64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let mut off = 0.0f64;
        let (mut p, mut q) = (0, 1.min(n.saturating_sub(1)));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = m[(i, j)].norm();
                if v > off {
                    off = v;
                    p = i;
                    q = j;
                }
            }
        }
        if off < 1e-13 || n < 2 {
            break;
        }
        // Unitary 2x2 rotation annihilating m[p][q].
        let apq = m[(p, q)];
        let app = m[(p, p)].re;
        let aqq = m[(q, q)].re;
        let phi = apq.arg();
        let abs = apq.norm();
        let theta = 0.5 * (2.0 * abs).atan2(aqq - app);
        let (s, co) = theta.sin_cos();
        let e_iphi = Complex64::from_polar(1.0, phi);
        // Columns of the rotation in the (p, q) plane.
        let up = (
            Complex64::new(co, 0.0),
            e_iphi.conj() * Complex64::new(s, 0.0),
        );
        let uq = (-e_iphi * Complex64::new(s, 0.0), Complex64::new(co, 0.0));
        let mut next = m.clone();
        for i in 0..n {
            let mip = m[(i, p)];
            let miq = m[(i, q)];
            next[(i, p)] = mip * up.0 + miq * up.1;
            next[(i, q)] = mip * uq.0 + miq * uq.1;
        }
        let snapshot = next.clone();
        for j in 0..n {
            let mpj = snapshot[(p, j)];
            let mqj = snapshot[(q, j)];
            next[(p, j)] = up.0.conj() * mpj + up.1.conj() * mqj;
            next[(q, j)] = uq.0.conj() * mpj + uq.1.conj() * mqj;
        }
        m = next;
    }
    (0..n).map(|i| m[(i, i)].re).collect()
}

// ---------------------------------------------------------------------------
// Inflation
// ---------------------------------------------------------------------------

fn inflate_ty(ty: &Ty, d: usize) -> Ty {
    let mut out = Vec::new();
    for k in ty.iter() {
        if k == WireKind::Qmode {
            out.extend(std::iter::repeat(WireKind::Qmode).take(d));
        } else {
            out.push(k);
        }
    }
    Ty(out)
}

fn touches_qmode(cd: &ChannelDiagram, node: &crate::diagram::Node<Channel>) -> bool {
    node.inputs
        .iter()
        .chain(node.outputs.iter())
        .any(|&w| cd.wire_kind(w) == WireKind::Qmode)
}

/// Inflates LO gates of a pure diagram to act per internal copy; only
/// identities, swaps and LO gates are supported.
fn inflate_pure_lo(body: &Diagram, d: usize) -> Result<Diagram> {
    Diagram::build(inflate_ty(&body.dom(), d), |b, handles| {
        let mut map: BTreeMap<usize, Vec<WireHandle>> = BTreeMap::new();
        let mut it = handles.into_iter();
        for &w in body.dom_wires() {
            let n = if body.wire_kind(w) == WireKind::Qmode { d } else { 1 };
            map.insert(w, (0..n).map(|_| it.next().unwrap()).collect());
        }
        for node in body.nodes() {
            match &node.gen {
                Generator::LoGate(kind) => {
                    let k = kind.modes();
                    let mut outs: Vec<Vec<WireHandle>> = vec![Vec::new(); k];
                    for copy in 0..d {
                        let ins: Vec<WireHandle> =
                            node.inputs.iter().map(|w| map[w][copy]).collect();
                        let o = b.apply(node.gen.clone(), &ins)?;
                        for (slot, h) in o.into_iter().enumerate() {
                            outs[slot].push(h);
                        }
                    }
                    for (w, v) in node.outputs.iter().zip(outs) {
                        map.insert(*w, v);
                    }
                }
                other => {
                    return Err(Error::InflationUnsupported(other.box_name()));
                }
            }
        }
        let mut out = Vec::new();
        for &w in body.cod_wires() {
            out.extend(map[&w].iter().copied());
        }
        Ok(out)
    })
}

/// The single generator of an env-free single-box Kraus diagram, when the
/// channel has that shape.
fn single_generator(ch: &Channel) -> Option<&Generator> {
    if ch.env.is_empty() && ch.kraus.nodes().len() == 1 && ch.kraus.scalars().is_empty() {
        Some(&ch.kraus.nodes()[0].gen)
    } else {
        None
    }
}

/// Replaces every `qmode` wire by `d` wires, one per internal basis state:
/// linear-optical gates act independently on each copy, sources with internal
/// state `s` emit the superposition over copies weighted by `s`, and
/// detectors and loss act on the occupation summed across copies.
pub fn inflate(cd: &ChannelDiagram, d: usize) -> Result<ChannelDiagram> {
    if d == 0 {
        return Err(Error::RangeError(0.0));
    }
    if d == 1 {
        return Ok(cd.clone());
    }
    ChannelDiagram::build(inflate_ty(&cd.dom(), d), |b, handles| {
        for &s in cd.scalars() {
            b.add_scalar(s);
        }
        let mut map: BTreeMap<usize, Vec<WireHandle>> = BTreeMap::new();
        let mut it = handles.into_iter();
        for &w in cd.dom_wires() {
            let n = if cd.wire_kind(w) == WireKind::Qmode { d } else { 1 };
            map.insert(w, (0..n).map(|_| it.next().unwrap()).collect());
        }

        for node in cd.nodes() {
            let ch = &node.gen;
            if !touches_qmode(cd, node) {
                let ins: Vec<WireHandle> = node.inputs.iter().map(|w| map[w][0]).collect();
                let outs = b.apply(ch.clone(), &ins)?;
                for (w, h) in node.outputs.iter().zip(outs) {
                    map.insert(*w, vec![h]);
                }
                continue;
            }

            match &ch.kind {
                ChannelKind::MeasureWire => {
                    // Detectors are blind to the internal label: number-resolve
                    // each copy and sum.
                    let copies = map[&node.inputs[0]].clone();
                    let mut modes = Vec::new();
                    for h in copies {
                        let m = b.apply(
                            Channel::from_kraus(
                                "Measure",
                                gen::cast(WireKind::Qmode, WireKind::Mode),
                            )
                            .with_kind(ChannelKind::MeasureWire),
                            &[h],
                        )?;
                        modes.push(m[0]);
                    }
                    let summed = b.apply(
                        Channel::from_kraus(format!("Add({d})"), gen::add(d)),
                        &modes,
                    )?;
                    map.insert(node.outputs[0], vec![summed[0]]);
                }
                ChannelKind::DiscardWire => {
                    for h in map[&node.inputs[0]].clone() {
                        let dis = Channel {
                            name: "Discard".into(),
                            kraus: Diagram::id(crate::diagram::qmode()),
                            env: crate::diagram::qmode(),
                            kind: ChannelKind::DiscardWire,
                        };
                        b.apply(dis, &[h])?;
                    }
                }
                ChannelKind::PhotonLoss(p) => {
                    // Uniform loss commutes with the internal label.
                    let loss = photon_loss(*p)?;
                    let loss_box = loss.nodes()[0].gen.clone();
                    let mut outs = Vec::new();
                    for h in map[&node.inputs[0]].clone() {
                        let o = b.apply(loss_box.clone(), &[h])?;
                        outs.push(o[0]);
                    }
                    map.insert(node.outputs[0], outs);
                }
                ChannelKind::EncodeWire => {
                    return Err(Error::InflationUnsupported(ch.name.clone()));
                }
                ChannelKind::Pure => {
                    let g = single_generator(ch)
                        .ok_or_else(|| Error::InflationUnsupported(ch.name.clone()))?
                        .clone();
                    match g {
                        Generator::LoGate(ref kind) => {
                            let k = kind.modes();
                            let mut outs: Vec<Vec<WireHandle>> = vec![Vec::new(); k];
                            for copy in 0..d {
                                let ins: Vec<WireHandle> =
                                    node.inputs.iter().map(|w| map[w][copy]).collect();
                                let o = b.apply(
                                    Channel::from_kraus(ch.name.clone(), Wiring::from_box(g.clone())),
                                    &ins,
                                )?;
                                for (slot, h) in o.into_iter().enumerate() {
                                    outs[slot].push(h);
                                }
                            }
                            for (w, v) in node.outputs.iter().zip(outs) {
                                map.insert(*w, v);
                            }
                        }
                        Generator::Create {
                            ref occupations,
                            ref internal,
                        } => {
                            let photons: u64 = occupations.iter().sum();
                            let states = match internal {
                                Some(s) => s.clone(),
                                None if photons == 0 => Vec::new(),
                                None => return Err(Error::MissingInternalState(d)),
                            };
                            for s in &states {
                                if s.dim() != d {
                                    return Err(Error::DimensionMismatch(s.dim(), d));
                                }
                            }
                            let mut photon_idx = 0usize;
                            for (mode_i, &n_i) in occupations.iter().enumerate() {
                                let copies: Vec<WireHandle> = if n_i == 0 {
                                    b.apply(
                                        Channel::from_kraus(
                                            "Create",
                                            gen::create(&vec![0u64; d]),
                                        ),
                                        &[],
                                    )?
                                } else {
                                    // One CreatePhoton per photon, merged per copy.
                                    let mut per_photon: Vec<Vec<WireHandle>> = Vec::new();
                                    for _ in 0..n_i {
                                        let amps = states[photon_idx].0.clone();
                                        photon_idx += 1;
                                        let cp = Wiring::from_box(Generator::CreatePhoton {
                                            amps,
                                            select: false,
                                        });
                                        per_photon.push(b.apply(
                                            Channel::from_kraus("CreatePhoton", cp),
                                            &[],
                                        )?);
                                    }
                                    if per_photon.len() == 1 {
                                        per_photon.pop().unwrap()
                                    } else {
                                        let mut merged = Vec::new();
                                        for copy in 0..d {
                                            let ins: Vec<WireHandle> = per_photon
                                                .iter()
                                                .map(|ph| ph[copy])
                                                .collect();
                                            let m = b.apply(
                                                Channel::from_kraus(
                                                    "W†",
                                                    gen::w_merge(per_photon.len()),
                                                ),
                                                &ins,
                                            )?;
                                            merged.push(m[0]);
                                        }
                                        merged
                                    }
                                };
                                map.insert(node.outputs[mode_i], copies);
                            }
                        }
                        Generator::DualRail {
                            ref internal,
                            decode: false,
                        } => {
                            let state = internal
                                .clone()
                                .ok_or(Error::MissingInternalState(d))?;
                            if state.dim() != d {
                                return Err(Error::DimensionMismatch(state.dim(), d));
                            }
                            let dri = Wiring::from_box(Generator::DualRailInternal {
                                amps: state.0,
                                decode: false,
                            });
                            let ins: Vec<WireHandle> =
                                node.inputs.iter().map(|w| map[w][0]).collect();
                            let outs = b.apply(
                                Channel::from_kraus("DualRail", dri),
                                &ins,
                            )?;
                            map.insert(node.outputs[0], outs[..d].to_vec());
                            map.insert(node.outputs[1], outs[d..].to_vec());
                        }
                        Generator::BitCtrl {
                            ref body,
                            adjoint,
                        } => {
                            let inflated = inflate_pure_lo(body, d)?;
                            let ins: Vec<WireHandle> = node
                                .inputs
                                .iter()
                                .flat_map(|w| map[w].iter().copied())
                                .collect();
                            let outs = b.apply(
                                Channel::from_kraus(
                                    ch.name.clone(),
                                    Wiring::from_box(Generator::BitCtrl {
                                        body: Box::new(inflated),
                                        adjoint,
                                    }),
                                ),
                                &ins,
                            )?;
                            let mut pos = 0;
                            for &w in &node.outputs {
                                let n = if cd.wire_kind(w) == WireKind::Qmode { d } else { 1 };
                                map.insert(w, outs[pos..pos + n].to_vec());
                                pos += n;
                            }
                        }
                        ref other => {
                            return Err(Error::InflationUnsupported(other.box_name()));
                        }
                    }
                }
                ChannelKind::Custom => {
                    return Err(Error::InflationUnsupported(ch.name.clone()));
                }
            }
        }

        let mut out = Vec::new();
        for &w in cd.cod_wires() {
            out.extend(map[&w].iter().copied());
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{qubit, Param};
    use crate::photonic;
    use crate::qubits;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn doubled_identity_channel_is_identity_superoperator() {
        let idq = ChannelDiagram::id(qubit());
        let ev = idq.eval().unwrap();
        // dom (ket, bra) then cod (ket, bra): delta(i=k) delta(j=l)
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let expected = if i == k && j == l { 1.0 } else { 0.0 };
                        let v = ev.tensor[[i, j, k, l]];
                        assert!((v - c(expected, 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn measure_plus_state_is_uniform() {
        // |+><+| measured: uniform bit distribution.
        let plus = {
            let mut d = crate::generators::z(WireKind::Qubit, 0, 1, Param::lit(0.0));
            d.push_scalar(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
            pure_channel("Ket+", d)
        };
        let diag = plus.then(&qubits::measure(1)).unwrap();
        let dist = diag.eval().unwrap().prob_dist().unwrap();
        assert!((dist[&vec![0]] - 0.5).abs() < 1e-12);
        assert!((dist[&vec![1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn encode_then_measure_is_classical_identity() {
        let ty = Ty::single(WireKind::Bit);
        let diag = encode(&ty).unwrap().then(&qubits::measure(1)).unwrap();
        let ev = diag.eval().unwrap();
        // dom: 1 classical axis; cod: 1 classical axis
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ev.tensor[[i, j]] - c(expected, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bit_flip_matches_its_defining_equation() {
        for p in [0.0, 0.3, 1.0] {
            let diag = qubits::ket(&[0]).then(&bit_flip(p).unwrap()).unwrap();
            let rho = diag.eval().unwrap().density_matrix().unwrap();
            assert!((rho[(0, 0)] - c(1.0 - p, 0.0)).norm() < 1e-12, "p={p}");
            assert!((rho[(1, 1)] - c(p, 0.0)).norm() < 1e-12, "p={p}");
            assert!(rho[(0, 1)].norm() < 1e-12);
        }
    }

    #[test]
    fn full_dephasing_kills_coherence() {
        let plus = {
            let mut d = crate::generators::z(WireKind::Qubit, 0, 1, Param::lit(0.0));
            d.push_scalar(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
            pure_channel("Ket+", d)
        };
        let diag = plus.then(&dephasing(0.5).unwrap()).unwrap();
        let rho = diag.eval().unwrap().density_matrix().unwrap();
        assert!((rho[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((rho[(1, 1)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!(rho[(0, 1)].norm() < 1e-12);
        assert!(rho[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn photon_loss_is_binomial_on_two_photons() {
        let p = 0.7;
        let diag = photonic::create(&[2])
            .then(&photon_loss(p).unwrap())
            .unwrap()
            .then(&photonic::nr_measurement(1))
            .unwrap();
        let dist = diag.eval().unwrap().prob_dist().unwrap();
        for k in 0..=2u64 {
            let binom = match k {
                0 => (1.0 - p) * (1.0 - p),
                1 => 2.0 * p * (1.0 - p),
                _ => p * p,
            };
            assert!(
                (dist[&vec![k]] - binom).abs() < 1e-9,
                "k={k}: {} vs {binom}",
                dist[&vec![k]]
            );
        }
    }

    #[test]
    fn loss_with_p_one_is_identity() {
        let diag = photonic::create(&[1])
            .then(&photon_loss(1.0).unwrap())
            .unwrap()
            .then(&photonic::nr_measurement(1))
            .unwrap();
        let dist = diag.eval().unwrap().prob_dist().unwrap();
        assert!((dist[&vec![1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hom_dip_listing() {
        let hom = photonic::create(&[1])
            .tensor(&photonic::create(&[1]))
            .then(&photonic::bs())
            .unwrap();
        let dist = hom.eval().unwrap().prob_dist().unwrap();
        assert!(dist[&vec![1, 1]].abs() < 1e-12);
        assert!((dist[&vec![2, 0]] - 0.5).abs() < 1e-12);
        assert!((dist[&vec![0, 2]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lossy_hom_listing() {
        // Create(1,1) >> PhotonLoss(0.8) @ Id(1) >> BS >> NR(2) >> Add(2):
        // P(total = 1) = 0.2.
        let diag = photonic::create(&[1, 1])
            .then(&photon_loss(0.8).unwrap().tensor(&photonic::id(1)))
            .unwrap()
            .then(&photonic::bs())
            .unwrap()
            .then(&photonic::nr_measurement(2))
            .unwrap()
            .then(&crate::classical::add(2))
            .unwrap();
        let dist = diag.eval().unwrap().prob_dist().unwrap();
        assert!((dist[&vec![1]] - 0.2).abs() < 1e-9, "{}", dist[&vec![1]]);
    }

    #[test]
    fn teleportation_is_the_identity_channel() {
        // Listing-style construction with monoidal syntax.
        let bell = qubits::scalar(c(0.5f64.sqrt(), 0.0)).tensor(&qubits::z0(0, 2));
        let teleport = qubits::id(1)
            .tensor(&bell)
            .then(&qubits::cnot().tensor(&qubits::id(1)))
            .unwrap()
            .then(&qubits::h().tensor(&qubits::id(2)))
            .unwrap()
            .then(
                &qubits::measure(1)
                    .tensor(&qubits::measure(1))
                    .tensor(&qubits::id(1)),
            )
            .unwrap()
            .then(&crate::classical::id_bit(1).tensor(&crate::classical::ctrl_x()))
            .unwrap()
            .then(&crate::classical::ctrl_z())
            .unwrap();
        let ev = teleport.eval().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let expected = if i == k && j == l { 1.0 } else { 0.0 };
                        let v = ev.tensor[[i, j, k, l]];
                        assert!(
                            (v - c(expected, 0.0)).norm() < 1e-9,
                            "[{i}{j}{k}{l}] = {v}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn trace_preservation_of_catalog_channels() {
        // Channel >> discard contracts to the identity effect on the input
        // (scalar 1 once composed with a normalized state).
        let plus = {
            let mut d = crate::generators::z(WireKind::Qubit, 0, 1, Param::lit(0.0));
            d.push_scalar(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
            pure_channel("Ket+", d)
        };
        let channels: Vec<ChannelDiagram> = vec![
            bit_flip(0.3).unwrap(),
            dephasing(0.7).unwrap(),
            qubits::measure(1)
                .then(&crate::channel::discard(&Ty::single(WireKind::Bit)))
                .unwrap()
                .then(&ChannelDiagram::id(Ty::empty()))
                .unwrap(),
            qubits::h(),
        ];
        for ch in channels {
            let dis = if ch.cod().is_empty() {
                ChannelDiagram::id(Ty::empty())
            } else {
                discard(&ch.cod())
            };
            let diag = plus.clone().then(&ch).unwrap().then(&dis).unwrap();
            let s = diag.eval().unwrap().scalar().unwrap();
            assert!((s - c(1.0, 0.0)).norm() < 1e-9, "trace {s}");
        }
        // Photonic: loss then discard is trace preserving.
        let diag = photonic::create(&[2])
            .then(&photon_loss(0.4).unwrap())
            .unwrap()
            .then(&discard(&crate::diagram::qmode()))
            .unwrap();
        let s = diag.eval().unwrap().scalar().unwrap();
        assert!((s - c(1.0, 0.0)).norm() < 1e-9, "loss trace {s}");
    }

    #[test]
    fn distinguishable_hom_listing() {
        // Internal states with overlap x: P(1,1) = 0.5 - 0.5 x^2.
        let s1 = crate::generators::InternalState::real(&[1.0, 0.0]).unwrap();
        let s2 =
            crate::generators::InternalState::real(&[0.9f64.sqrt(), 0.1f64.sqrt()]).unwrap();
        let diag = photonic::create_with_states(&[1, 1], vec![s1, s2])
            .unwrap()
            .then(&photonic::bs())
            .unwrap()
            .then(&photonic::nr_measurement(2))
            .unwrap();
        let inflated = inflate(&diag, 2).unwrap();
        let dist = inflated.eval().unwrap().prob_dist().unwrap();
        let expected = 0.5 - 0.5 * 0.9;
        assert!(
            (dist[&vec![1, 1]] - expected).abs() < 1e-9,
            "{} vs {expected}",
            dist[&vec![1, 1]]
        );
    }

    #[test]
    fn inflate_dimension_one_is_identity() {
        let diag = photonic::create(&[1, 1]).then(&photonic::bs()).unwrap();
        let inflated = inflate(&diag, 1).unwrap();
        assert_eq!(diag, inflated);
    }

    #[test]
    fn loss_commutes_with_phase() {
        let a = photonic::phase(Param::lit(0.37))
            .then(&photon_loss(0.6).unwrap())
            .unwrap();
        let b = photon_loss(0.6)
            .unwrap()
            .then(&photonic::phase(Param::lit(0.37)))
            .unwrap();
        let opts = TnOptions {
            infer: crate::tn::InferOptions {
                default_input_dim: 4,
                min_fock_dim: None,
            },
            ..Default::default()
        };
        let ta = a.eval_with(&opts).unwrap().tensor;
        let tb = b.eval_with(&opts).unwrap().tensor;
        let dev = ta
            .iter()
            .zip(tb.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-12, "deviation {dev}");
    }
}

// ---------------------------------------------------------------------------
// Backend routing
// ---------------------------------------------------------------------------

/// Evaluation backend selection.
#[derive(Clone, Debug)]
pub enum Backend {
    /// Compile to a tensor network, plan, contract.
    Tn(TnOptions),
    /// Permanent-based linear-optical evaluation.
    Permanent(crate::permanent::PermAlgo),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Tn(TnOptions::default())
    }
}

impl Wiring<Channel> {
    /// Evaluates through the chosen backend. The permanent route accepts
    /// closed linear-optical diagrams (sources, LO gates, optional trailing
    /// number-resolving measurement) and rejects anything else.
    pub fn eval_backend(&self, backend: &Backend) -> Result<EvalResult> {
        match backend {
            Backend::Tn(opts) => self.eval_with(opts),
            Backend::Permanent(algo) => self.eval_permanent(*algo),
        }
    }

    fn eval_permanent(&self, algo: crate::permanent::PermAlgo) -> Result<EvalResult> {
        let free = self.free_symbols();
        if !free.is_empty() {
            return Err(Error::SymbolicDiagram(free.into_iter().collect()));
        }
        if !self.dom().is_empty() {
            return Err(Error::BackendIneligible("open inputs".into()));
        }
        // Split off trailing per-wire measurements: every MeasureWire box must
        // feed the codomain directly.
        let cod_set: BTreeSet<usize> = self.cod_wires().iter().copied().collect();
        let mut measured_wires: BTreeSet<usize> = BTreeSet::new();
        for node in self.nodes() {
            match node.gen.kind {
                ChannelKind::MeasureWire => {
                    if !cod_set.contains(&node.outputs[0]) {
                        return Err(Error::BackendIneligible(format!(
                            "{} feeding further processing",
                            node.gen.name
                        )));
                    }
                    measured_wires.insert(node.outputs[0]);
                }
                ChannelKind::Pure => {}
                _ => return Err(Error::BackendIneligible(node.gen.name.clone())),
            }
        }
        if !(measured_wires.is_empty() || measured_wires.len() == self.cod_wires().len()) {
            return Err(Error::BackendIneligible(
                "mixed measured and unmeasured outputs".into(),
            ));
        }
        let measured = !measured_wires.is_empty();
        // Rebuild without the measurement boxes; their inputs become outputs.
        let stripped = ChannelDiagram::build(self.dom(), |b, handles| {
            let mut map: BTreeMap<usize, WireHandle> = self
                .dom_wires()
                .iter()
                .copied()
                .zip(handles)
                .collect();
            for node in self.nodes() {
                if matches!(node.gen.kind, ChannelKind::MeasureWire) {
                    // Identity: the quantum wire flows straight through.
                    map.insert(node.outputs[0], map[&node.inputs[0]]);
                    continue;
                }
                let ins: Vec<WireHandle> = node.inputs.iter().map(|w| map[w]).collect();
                let outs = b.apply(node.gen.clone(), &ins)?;
                for (w, h) in node.outputs.iter().zip(outs) {
                    map.insert(*w, h);
                }
            }
            Ok(self.cod_wires().iter().map(|w| map[w]).collect())
        })?;
        let pure = stripped.as_pure()?;
        let amplitudes = crate::permanent::eval_open_permanent(&pure, algo)?;
        let photons: u64 = amplitudes
            .keys()
            .map(|p| p.iter().sum())
            .max()
            .unwrap_or(0);
        let dim = photons + 1;
        let m = self.cod_wires().len();
        let shape: Vec<usize> = vec![dim as usize; m];
        if measured {
            let mut tensor = ArrayD::zeros(IxDyn(&shape));
            for (pattern, amp) in &amplitudes {
                let idx: Vec<usize> = pattern.iter().map(|&v| v as usize).collect();
                tensor[idx.as_slice()] += Complex64::new(amp.norm_sqr(), 0.0);
            }
            let cod_factors = self
                .cod()
                .iter()
                .map(|kind| FactorInfo {
                    kind,
                    quantum: false,
                    dim,
                })
                .collect();
            Ok(EvalResult {
                tensor,
                dom_factors: Vec::new(),
                cod_factors,
                doubled: true,
            })
        } else {
            let mut tensor = ArrayD::zeros(IxDyn(&shape));
            for (pattern, amp) in &amplitudes {
                let idx: Vec<usize> = pattern.iter().map(|&v| v as usize).collect();
                tensor[idx.as_slice()] += amp;
            }
            let cod_factors = self
                .cod()
                .iter()
                .map(|kind| FactorInfo {
                    kind,
                    quantum: true,
                    dim,
                })
                .collect();
            Ok(EvalResult {
                tensor,
                dom_factors: Vec::new(),
                cod_factors,
                doubled: false,
            })
        }
    }
}
