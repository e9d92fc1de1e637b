//! The generator catalog: ZX and ZW generators, linear-optical gates,
//! classical maps, and their truncation semantics.
//!
//! Every generator defines its tensor by an enumerable action on capped basis
//! vectors: [`Generator::transitions`] receives an input [`BasisState`] and
//! the output caps, and yields the nonzero [`BasisTransition`]s, never
//! exceeding the caps.

use crate::diagram::{
    bit, qmode, qubit, Bindings, DiagramBox, Param, Sum, Ty, WireKind, Wiring,
};
use crate::error::{Error, Result};
use crate::permanent::{amplitude, PermAlgo};
use ndarray::Array2;
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

/// A pure diagram over the generator catalog.
pub type Diagram = Wiring<Generator>;
/// A formal sum of pure diagrams.
pub type DiagramSum = Sum<Generator>;

/// Occupation numbers, one per wire of the indexed port set.
pub type BasisState = Vec<u64>;

/// One nonzero entry of a generator column.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTransition {
    pub out: BasisState,
    pub amp: Complex64,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cis(turns: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * turns)
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A single photon's internal state, unit-norm to 1e-9.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalState(pub Vec<Complex64>);

impl InternalState {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NormError((norm - 1.0).abs()));
        }
        Ok(InternalState(amps))
    }

    pub fn real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| c(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn conj(&self) -> Self {
        InternalState(self.0.iter().map(|a| a.conj()).collect())
    }
}

/// Passive linear-optical gate kinds with their single-photon matrices.
#[derive(Clone, Debug, PartialEq)]
pub enum LoKind {
    /// `Phase(psi)` = e^{2*pi*i*psi*n} on one mode; phases are in turns.
    Phase(Param),
    /// Tunable beamsplitter `[[cos 2πθ, i sin 2πθ], [i sin 2πθ, cos 2πθ]]`.
    Tbs(Param),
    /// Biased beamsplitter, balanced at bias = 0; `BBS(b) = TBS((1+b)/8)`.
    Bbs(Param),
    /// Real beamsplitter acting as the dual-rail fusion rotation;
    /// `dagger` distinguishes it from its transpose.
    HadamardBs { dagger: bool },
}

impl LoKind {
    pub fn modes(&self) -> usize {
        match self {
            LoKind::Phase(_) => 1,
            _ => 2,
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            LoKind::Phase(p) | LoKind::Tbs(p) | LoKind::Bbs(p) => vec![p],
            LoKind::HadamardBs { .. } => vec![],
        }
    }

    /// The single-photon matrix; fails on unbound symbols.
    pub fn matrix(&self) -> Result<Array2<Complex64>> {
        let need = |p: &Param| {
            p.value().ok_or_else(|| {
                let mut syms = BTreeSet::new();
                p.collect_symbols(&mut syms);
                Error::SymbolicDiagram(syms.into_iter().collect())
            })
        };
        Ok(match self {
            LoKind::Phase(p) => {
                let psi = need(p)?;
                Array2::from_shape_vec((1, 1), vec![cis(psi)]).unwrap()
            }
            LoKind::Tbs(p) => tbs_matrix(need(p)?),
            LoKind::Bbs(p) => tbs_matrix((1.0 + need(p)?) / 8.0),
            LoKind::HadamardBs { dagger } => {
                let r = FRAC_1_SQRT_2;
                let m = if *dagger {
                    vec![c(r, 0.0), c(-r, 0.0), c(r, 0.0), c(r, 0.0)]
                } else {
                    vec![c(r, 0.0), c(r, 0.0), c(-r, 0.0), c(r, 0.0)]
                };
                Array2::from_shape_vec((2, 2), m).unwrap()
            }
        })
    }
}

fn tbs_matrix(theta: f64) -> Array2<Complex64> {
    let (s, co) = (2.0 * PI * theta).sin_cos();
    Array2::from_shape_vec(
        (2, 2),
        vec![c(co, 0.0), c(0.0, s), c(0.0, s), c(co, 0.0)],
    )
    .unwrap()
}

/// A deterministic classical map given by a total or partial function on
/// occupation tuples; entries outside the function's domain carry amplitude 0.
#[derive(Clone)]
pub struct ClassicalFn {
    pub name: String,
    pub dom: Ty,
    pub cod: Ty,
    pub func: Arc<dyn Fn(&[u64]) -> Option<Vec<u64>> + Send + Sync>,
    /// When set, the tensor is the transpose (the relational converse).
    pub transposed: bool,
}

impl fmt::Debug for ClassicalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassicalFn")
            .field("name", &self.name)
            .field("dom", &self.dom)
            .field("cod", &self.cod)
            .field("transposed", &self.transposed)
            .finish()
    }
}

impl PartialEq for ClassicalFn {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.dom == other.dom
            && self.cod == other.cod
            && self.transposed == other.transposed
    }
}

/// The generator catalog.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    /// Z-type spider: all legs carry the same basis value; on two-level wires
    /// the value `1` picks up `e^{2*pi*i*phase}`.
    ZSpider {
        wire: WireKind,
        n_in: usize,
        n_out: usize,
        phase: Param,
    },
    /// X-type spider on two-level wires: the Z spider conjugated by Hadamard
    /// on every leg.
    XSpider {
        wire: WireKind,
        n_in: usize,
        n_out: usize,
        phase: Param,
    },
    Hadamard,
    /// Binomial split `1 -> legs` on Fock wires.
    WSplit { legs: usize },
    /// Binomial merge `legs -> 1`; the dagger of the split.
    WMerge { legs: usize },
    Create {
        occupations: Vec<u64>,
        internal: Option<Vec<InternalState>>,
    },
    /// Post-selects the exact occupation pattern; the dagger of `Create`.
    /// Internal states are carried through dagger but ignored by truncation.
    Select {
        occupations: Vec<u64>,
        internal: Option<Vec<InternalState>>,
    },
    NumOp,
    LoGate(LoKind),
    /// Dual-rail qubit encoder `|b> -> |1-b, b>`; `decode` is its dagger.
    DualRail {
        internal: Option<InternalState>,
        decode: bool,
    },
    /// Single photon spread over `amps.len()` internal copies with the given
    /// amplitudes; `select` is its dagger. Produced by inflation.
    CreatePhoton {
        amps: Vec<Complex64>,
        select: bool,
    },
    /// Inflated dual-rail encoder: `|b>` puts one photon in rail `b`, spread
    /// over the internal copies of that rail.
    DualRailInternal {
        amps: Vec<Complex64>,
        decode: bool,
    },
    /// Identity retyping between a quantum wire and its classical shadow (or
    /// back); the Kraus map of measurement and preparation.
    Cast { from: WireKind, to: WireKind },
    Classical(ClassicalFn),
    /// `bit (x) Q -> Q`: identity for control 0, the body for control 1.
    /// `adjoint` is the conjugate-transpose form `Q -> bit (x) Q` (control
    /// boxes are not square, so their dagger needs its own direction).
    BitCtrl { body: Box<Diagram>, adjoint: bool },
}

impl Generator {
    fn phase_param_mut(&mut self) -> Option<&mut Param> {
        match self {
            Generator::ZSpider { phase, .. } | Generator::XSpider { phase, .. } => Some(phase),
            Generator::LoGate(kind) => match kind {
                LoKind::Phase(p) | LoKind::Tbs(p) | LoKind::Bbs(p) => Some(p),
                LoKind::HadamardBs { .. } => None,
            },
            _ => None,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Generator::ZSpider { phase, .. } | Generator::XSpider { phase, .. } => vec![phase],
            Generator::LoGate(kind) => kind.params(),
            _ => vec![],
        }
    }

    /// The tensor of the generator as enumerated basis transitions.
    ///
    /// `input` indexes the dom wires, `in_dims` are their dimensions and
    /// `out_caps` the cod dimensions; every emitted state respects the caps.
    pub fn transitions(
        &self,
        input: &[u64],
        in_dims: &[u64],
        out_caps: &[u64],
    ) -> Result<Vec<BasisTransition>> {
        match self {
            Generator::ZSpider { phase, .. } => {
                let phase = phase
                    .value()
                    .ok_or_else(|| Error::SymbolicDiagram(symbol_list(phase)))?;
                if input.is_empty() && out_caps.is_empty() {
                    // Legless two-level spider: the scalar 1 + e^{2 pi i phase}.
                    return Ok(vec![BasisTransition {
                        out: vec![],
                        amp: c(1.0, 0.0) + cis(phase),
                    }]);
                }
                let values: Vec<u64> = if input.is_empty() {
                    let max = out_caps.iter().copied().min().unwrap_or(2);
                    (0..max).collect()
                } else {
                    let b = input[0];
                    if input.iter().any(|&v| v != b) {
                        return Ok(vec![]);
                    }
                    vec![b]
                };
                let mut out = Vec::new();
                for b in values {
                    if out_caps.iter().any(|&cap| b >= cap) {
                        continue;
                    }
                    out.push(BasisTransition {
                        out: vec![b; out_caps.len()],
                        amp: cis(phase * b as f64),
                    });
                }
                Ok(out)
            }
            Generator::XSpider {
                phase, n_in, n_out, ..
            } => {
                let phase = phase
                    .value()
                    .ok_or_else(|| Error::SymbolicDiagram(symbol_list(phase)))?;
                let legs = n_in + n_out;
                let norm = FRAC_1_SQRT_2.powi(legs as i32);
                let in_sum: u64 = input.iter().sum();
                let mut out = Vec::new();
                for bits in 0..(1u64 << n_out) {
                    let pattern: Vec<u64> = (0..*n_out).map(|k| (bits >> k) & 1).collect();
                    if pattern.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                        continue;
                    }
                    let total = in_sum + pattern.iter().sum::<u64>();
                    let sign = if total % 2 == 0 { 1.0 } else { -1.0 };
                    let amp = (c(1.0, 0.0) + cis(phase) * sign) * norm;
                    if amp.norm() > 0.0 {
                        out.push(BasisTransition { out: pattern, amp });
                    }
                }
                Ok(out)
            }
            Generator::Hadamard => {
                let i = input[0];
                let mut out = Vec::new();
                for j in 0..2u64.min(out_caps[0]) {
                    let sign = if i * j == 1 { -1.0 } else { 1.0 };
                    out.push(BasisTransition {
                        out: vec![j],
                        amp: c(sign * FRAC_1_SQRT_2, 0.0),
                    });
                }
                Ok(out)
            }
            Generator::WSplit { legs } => {
                let m = input[0];
                let mut out = Vec::new();
                for parts in crate::permanent::compositions(m, *legs) {
                    if parts.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                        continue;
                    }
                    let amp = (factorial(m) / parts.iter().map(|&k| factorial(k)).product::<f64>())
                        .sqrt();
                    out.push(BasisTransition {
                        out: parts,
                        amp: c(amp, 0.0),
                    });
                }
                Ok(out)
            }
            Generator::WMerge { .. } => {
                let m: u64 = input.iter().sum();
                if m >= out_caps[0] {
                    return Ok(vec![]);
                }
                let amp =
                    (factorial(m) / input.iter().map(|&k| factorial(k)).product::<f64>()).sqrt();
                Ok(vec![BasisTransition {
                    out: vec![m],
                    amp: c(amp, 0.0),
                }])
            }
            Generator::Create { occupations, .. } => {
                if occupations.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                    return Ok(vec![]);
                }
                Ok(vec![BasisTransition {
                    out: occupations.clone(),
                    amp: c(1.0, 0.0),
                }])
            }
            Generator::Select { occupations, .. } => {
                if input == occupations.as_slice() {
                    Ok(vec![BasisTransition {
                        out: vec![],
                        amp: c(1.0, 0.0),
                    }])
                } else {
                    Ok(vec![])
                }
            }
            Generator::NumOp => {
                let n = input[0];
                if n >= out_caps[0] {
                    return Ok(vec![]);
                }
                Ok(vec![BasisTransition {
                    out: vec![n],
                    amp: c(n as f64, 0.0),
                }])
            }
            Generator::LoGate(kind) => {
                let u = kind.matrix()?;
                if kind.modes() == 1 {
                    let n = input[0];
                    if n >= out_caps[0] {
                        return Ok(vec![]);
                    }
                    return Ok(vec![BasisTransition {
                        out: vec![n],
                        amp: u[(0, 0)].powu(n as u32),
                    }]);
                }
                let total: u64 = input.iter().sum();
                let mut out = Vec::new();
                for t in crate::permanent::compositions(total, 2) {
                    if t.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                        continue;
                    }
                    let amp = amplitude(&u, input, &t, PermAlgo::Auto)?;
                    if amp.norm() > 1e-15 {
                        out.push(BasisTransition { out: t, amp });
                    }
                }
                Ok(out)
            }
            Generator::DualRail { internal, decode } => {
                if *decode {
                    match (input[0], input[1]) {
                        (1, 0) => Ok(vec![BasisTransition {
                            out: vec![0],
                            amp: c(1.0, 0.0),
                        }]),
                        (0, 1) => Ok(vec![BasisTransition {
                            out: vec![1],
                            amp: c(1.0, 0.0),
                        }]),
                        _ => Ok(vec![]),
                    }
                } else {
                    let _ = internal;
                    let b = input[0];
                    let pattern = vec![1 - b, b];
                    if pattern.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                        return Ok(vec![]);
                    }
                    Ok(vec![BasisTransition {
                        out: pattern,
                        amp: c(1.0, 0.0),
                    }])
                }
            }
            Generator::CreatePhoton { amps, select } => {
                let d = amps.len();
                if *select {
                    let ones: Vec<usize> =
                        (0..d).filter(|&k| input[k] != 0).collect();
                    if ones.len() == 1 && input[ones[0]] == 1 {
                        return Ok(vec![BasisTransition {
                            out: vec![],
                            amp: amps[ones[0]].conj(),
                        }]);
                    }
                    Ok(vec![])
                } else {
                    let mut out = Vec::new();
                    for (k, &a) in amps.iter().enumerate() {
                        if a.norm() == 0.0 {
                            continue;
                        }
                        let mut pattern = vec![0u64; d];
                        pattern[k] = 1;
                        if pattern.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                            continue;
                        }
                        out.push(BasisTransition { out: pattern, amp: a });
                    }
                    Ok(out)
                }
            }
            Generator::DualRailInternal { amps, decode } => {
                let d = amps.len();
                if *decode {
                    let ones: Vec<usize> = (0..2 * d).filter(|&k| input[k] != 0).collect();
                    if ones.len() == 1 && input[ones[0]] == 1 {
                        let rail = (ones[0] / d) as u64;
                        let k = ones[0] % d;
                        return Ok(vec![BasisTransition {
                            out: vec![rail],
                            amp: amps[k].conj(),
                        }]);
                    }
                    Ok(vec![])
                } else {
                    let b = input[0] as usize;
                    let mut out = Vec::new();
                    for (k, &a) in amps.iter().enumerate() {
                        if a.norm() == 0.0 {
                            continue;
                        }
                        let mut pattern = vec![0u64; 2 * d];
                        pattern[b * d + k] = 1;
                        if pattern.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                            continue;
                        }
                        out.push(BasisTransition { out: pattern, amp: a });
                    }
                    Ok(out)
                }
            }
            Generator::Cast { .. } => {
                let v = input[0];
                if v >= out_caps[0] {
                    return Ok(vec![]);
                }
                Ok(vec![BasisTransition {
                    out: vec![v],
                    amp: c(1.0, 0.0),
                }])
            }
            Generator::Classical(f) => {
                if f.transposed {
                    // Enumerate preimages of `input` under the function.
                    let mut out = Vec::new();
                    for x in enumerate_states(out_caps) {
                        if let Some(y) = (f.func)(&x) {
                            if y.as_slice() == input {
                                out.push(BasisTransition {
                                    out: x,
                                    amp: c(1.0, 0.0),
                                });
                            }
                        }
                    }
                    Ok(out)
                } else {
                    match (f.func)(input) {
                        None => Ok(vec![]),
                        Some(y) => {
                            if y.len() != out_caps.len() {
                                return Err(Error::ShapeMismatch(format!(
                                    "classical function `{}` returned {} values for {} outputs",
                                    f.name,
                                    y.len(),
                                    out_caps.len()
                                )));
                            }
                            if y.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                                Ok(vec![])
                            } else {
                                Ok(vec![BasisTransition {
                                    out: y,
                                    amp: c(1.0, 0.0),
                                }])
                            }
                        }
                    }
                }
            }
            Generator::BitCtrl { body, adjoint } => {
                if !adjoint {
                    let ctrl = input[0];
                    let q_in = &input[1..];
                    if ctrl == 0 {
                        if q_in.iter().zip(out_caps).any(|(&v, &cap)| v >= cap) {
                            return Ok(vec![]);
                        }
                        return Ok(vec![BasisTransition {
                            out: q_in.to_vec(),
                            amp: c(1.0, 0.0),
                        }]);
                    }
                    let tensor =
                        crate::tn::dense_with_boundary_dims(body, &in_dims[1..], out_caps)?;
                    let mut out = Vec::new();
                    for pattern in enumerate_states(out_caps) {
                        let mut idx: Vec<usize> = q_in.iter().map(|&v| v as usize).collect();
                        idx.extend(pattern.iter().map(|&v| v as usize));
                        let amp = tensor[idx.as_slice()];
                        if amp.norm() > 1e-15 {
                            out.push(BasisTransition { out: pattern, amp });
                        }
                    }
                    Ok(out)
                } else {
                    // Q -> bit (x) Q with entries conj(T[(b, q) -> q']).
                    let q_caps = &out_caps[1..];
                    let mut out = Vec::new();
                    if input.iter().zip(q_caps).all(|(&v, &cap)| v < cap) {
                        out.push(BasisTransition {
                            out: std::iter::once(0u64)
                                .chain(input.iter().copied())
                                .collect(),
                            amp: c(1.0, 0.0),
                        });
                    }
                    let tensor =
                        crate::tn::dense_with_boundary_dims(body, q_caps, in_dims)?;
                    for pattern in enumerate_states(q_caps) {
                        let mut idx: Vec<usize> =
                            pattern.iter().map(|&v| v as usize).collect();
                        idx.extend(input.iter().map(|&v| v as usize));
                        let amp = tensor[idx.as_slice()].conj();
                        if amp.norm() > 1e-15 {
                            out.push(BasisTransition {
                                out: std::iter::once(1u64)
                                    .chain(pattern.iter().copied())
                                    .collect(),
                                amp,
                            });
                        }
                    }
                    Ok(out)
                }
            }
        }
    }
}

fn symbol_list(p: &Param) -> Vec<String> {
    let mut s = BTreeSet::new();
    p.collect_symbols(&mut s);
    s.into_iter().collect()
}

/// All occupation tuples below the given caps, in lexicographic order.
pub fn enumerate_states(caps: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for &cap in caps {
        let mut next = Vec::with_capacity(out.len() * cap as usize);
        for prefix in &out {
            for v in 0..cap {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

impl DiagramBox for Generator {
    fn box_name(&self) -> String {
        match self {
            Generator::ZSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => format!("Z[{wire}]({n_in},{n_out},{phase})"),
            Generator::XSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => format!("X[{wire}]({n_in},{n_out},{phase})"),
            Generator::Hadamard => "H".into(),
            Generator::WSplit { legs } => format!("W({legs})"),
            Generator::WMerge { legs } => format!("W({legs})†"),
            Generator::Create { occupations, .. } => format!(
                "Create({})",
                occupations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Generator::Select { occupations, .. } => format!(
                "Select({})",
                occupations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Generator::NumOp => "NumOp".into(),
            Generator::LoGate(kind) => match kind {
                LoKind::Phase(p) => format!("Phase({p})"),
                LoKind::Tbs(p) => format!("TBS({p})"),
                LoKind::Bbs(p) => format!("BBS({p})"),
                LoKind::HadamardBs { dagger: false } => "HadamardBS".into(),
                LoKind::HadamardBs { dagger: true } => "HadamardBS†".into(),
            },
            Generator::DualRail { decode, .. } => {
                if *decode {
                    "DualRail†".into()
                } else {
                    "DualRail".into()
                }
            }
            Generator::CreatePhoton { select, .. } => {
                if *select {
                    "SelectPhoton".into()
                } else {
                    "CreatePhoton".into()
                }
            }
            Generator::DualRailInternal { decode, .. } => {
                if *decode {
                    "DualRailInternal†".into()
                } else {
                    "DualRailInternal".into()
                }
            }
            Generator::Cast { from, to } => format!("Cast({from}->{to})"),
            Generator::Classical(f) => {
                if f.transposed {
                    format!("{}†", f.name)
                } else {
                    f.name.clone()
                }
            }
            Generator::BitCtrl { adjoint, .. } => {
                if *adjoint {
                    "BitControlled†".into()
                } else {
                    "BitControlled".into()
                }
            }
        }
    }

    fn dom(&self) -> Ty {
        match self {
            Generator::ZSpider { wire, n_in, .. } | Generator::XSpider { wire, n_in, .. } => {
                Ty::repeat(*wire, *n_in)
            }
            Generator::Hadamard => qubit(),
            Generator::WSplit { .. } => qmode(),
            Generator::WMerge { legs } => Ty::repeat(WireKind::Qmode, *legs),
            Generator::Create { .. } => Ty::empty(),
            Generator::Select { occupations, .. } => {
                Ty::repeat(WireKind::Qmode, occupations.len())
            }
            Generator::NumOp => qmode(),
            Generator::LoGate(kind) => Ty::repeat(WireKind::Qmode, kind.modes()),
            Generator::DualRail { decode, .. } => {
                if *decode {
                    Ty::repeat(WireKind::Qmode, 2)
                } else {
                    qubit()
                }
            }
            Generator::CreatePhoton { amps, select } => {
                if *select {
                    Ty::repeat(WireKind::Qmode, amps.len())
                } else {
                    Ty::empty()
                }
            }
            Generator::DualRailInternal { amps, decode } => {
                if *decode {
                    Ty::repeat(WireKind::Qmode, 2 * amps.len())
                } else {
                    qubit()
                }
            }
            Generator::Cast { from, .. } => Ty::single(*from),
            Generator::Classical(f) => {
                if f.transposed {
                    f.cod.clone()
                } else {
                    f.dom.clone()
                }
            }
            Generator::BitCtrl { body, adjoint } => {
                if *adjoint {
                    body.cod()
                } else {
                    bit().tensor(&body.dom())
                }
            }
        }
    }

    fn cod(&self) -> Ty {
        match self {
            Generator::ZSpider { wire, n_out, .. } | Generator::XSpider { wire, n_out, .. } => {
                Ty::repeat(*wire, *n_out)
            }
            Generator::Hadamard => qubit(),
            Generator::WSplit { legs } => Ty::repeat(WireKind::Qmode, *legs),
            Generator::WMerge { .. } => qmode(),
            Generator::Create { occupations, .. } => {
                Ty::repeat(WireKind::Qmode, occupations.len())
            }
            Generator::Select { .. } => Ty::empty(),
            Generator::NumOp => qmode(),
            Generator::LoGate(kind) => Ty::repeat(WireKind::Qmode, kind.modes()),
            Generator::DualRail { decode, .. } => {
                if *decode {
                    qubit()
                } else {
                    Ty::repeat(WireKind::Qmode, 2)
                }
            }
            Generator::CreatePhoton { amps, select } => {
                if *select {
                    Ty::empty()
                } else {
                    Ty::repeat(WireKind::Qmode, amps.len())
                }
            }
            Generator::DualRailInternal { amps, decode } => {
                if *decode {
                    qubit()
                } else {
                    Ty::repeat(WireKind::Qmode, 2 * amps.len())
                }
            }
            Generator::Cast { to, .. } => Ty::single(*to),
            Generator::Classical(f) => {
                if f.transposed {
                    f.dom.clone()
                } else {
                    f.cod.clone()
                }
            }
            Generator::BitCtrl { body, adjoint } => {
                if *adjoint {
                    bit().tensor(&body.dom())
                } else {
                    body.cod()
                }
            }
        }
    }

    fn dagger(&self) -> Result<Self> {
        Ok(match self {
            Generator::ZSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => Generator::ZSpider {
                wire: *wire,
                n_in: *n_out,
                n_out: *n_in,
                phase: phase.neg(),
            },
            Generator::XSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => Generator::XSpider {
                wire: *wire,
                n_in: *n_out,
                n_out: *n_in,
                phase: phase.neg(),
            },
            Generator::Hadamard => Generator::Hadamard,
            Generator::WSplit { legs } => Generator::WMerge { legs: *legs },
            Generator::WMerge { legs } => Generator::WSplit { legs: *legs },
            Generator::Create {
                occupations,
                internal,
            } => Generator::Select {
                occupations: occupations.clone(),
                internal: internal.clone(),
            },
            Generator::Select {
                occupations,
                internal,
            } => Generator::Create {
                occupations: occupations.clone(),
                internal: internal.clone(),
            },
            Generator::NumOp => Generator::NumOp,
            Generator::LoGate(kind) => Generator::LoGate(match kind {
                LoKind::Phase(p) => LoKind::Phase(p.neg()),
                LoKind::Tbs(p) => LoKind::Tbs(p.neg()),
                // TBS(-(1+b)/8) = BBS(-b-2), keeping dagger an involution.
                LoKind::Bbs(p) => LoKind::Bbs(p.neg().shifted(-2.0)),
                LoKind::HadamardBs { dagger } => LoKind::HadamardBs { dagger: !dagger },
            }),
            Generator::DualRail { internal, decode } => Generator::DualRail {
                internal: internal.clone(),
                decode: !decode,
            },
            Generator::CreatePhoton { amps, select } => Generator::CreatePhoton {
                amps: amps.clone(),
                select: !select,
            },
            Generator::DualRailInternal { amps, decode } => Generator::DualRailInternal {
                amps: amps.clone(),
                decode: !decode,
            },
            Generator::Cast { from, to } => Generator::Cast {
                from: *to,
                to: *from,
            },
            Generator::Classical(f) => Generator::Classical(ClassicalFn {
                transposed: !f.transposed,
                ..f.clone()
            }),
            Generator::BitCtrl { body, adjoint } => Generator::BitCtrl {
                body: body.clone(),
                adjoint: !adjoint,
            },
        })
    }

    fn conjugate(&self) -> Self {
        match self {
            Generator::ZSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => Generator::ZSpider {
                wire: *wire,
                n_in: *n_in,
                n_out: *n_out,
                phase: phase.neg(),
            },
            Generator::XSpider {
                wire,
                n_in,
                n_out,
                phase,
            } => Generator::XSpider {
                wire: *wire,
                n_in: *n_in,
                n_out: *n_out,
                phase: phase.neg(),
            },
            Generator::LoGate(kind) => Generator::LoGate(match kind {
                LoKind::Phase(p) => LoKind::Phase(p.neg()),
                LoKind::Tbs(p) => LoKind::Tbs(p.neg()),
                LoKind::Bbs(p) => LoKind::Bbs(p.neg().shifted(-2.0)),
                LoKind::HadamardBs { dagger } => LoKind::HadamardBs { dagger: *dagger },
            }),
            Generator::Create {
                occupations,
                internal,
            } => Generator::Create {
                occupations: occupations.clone(),
                internal: internal
                    .as_ref()
                    .map(|v| v.iter().map(|s| s.conj()).collect()),
            },
            Generator::Select {
                occupations,
                internal,
            } => Generator::Select {
                occupations: occupations.clone(),
                internal: internal
                    .as_ref()
                    .map(|v| v.iter().map(|s| s.conj()).collect()),
            },
            Generator::CreatePhoton { amps, select } => Generator::CreatePhoton {
                amps: amps.iter().map(|a| a.conj()).collect(),
                select: *select,
            },
            Generator::DualRail { internal, decode } => Generator::DualRail {
                internal: internal.as_ref().map(|s| s.conj()),
                decode: *decode,
            },
            Generator::DualRailInternal { amps, decode } => Generator::DualRailInternal {
                amps: amps.iter().map(|a| a.conj()).collect(),
                decode: *decode,
            },
            Generator::BitCtrl { body, adjoint } => Generator::BitCtrl {
                body: Box::new(body.conjugate()),
                adjoint: *adjoint,
            },
            other => other.clone(),
        }
    }

    fn substitute(&self, bindings: &Bindings) -> Self {
        let mut out = self.clone();
        if let Some(p) = out.phase_param_mut() {
            *p = p.substitute(bindings);
        }
        if let Generator::BitCtrl { body, .. } = &mut out {
            *body = Box::new(body.substitute(bindings));
        }
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        for p in self.params() {
            p.collect_symbols(out);
        }
        if let Generator::BitCtrl { body, .. } = self {
            out.extend(body.free_symbols());
        }
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Z spider on qubit (quantum) or bit (classical) wires; phase in turns.
pub fn z(wire: WireKind, n_in: usize, n_out: usize, phase: Param) -> Diagram {
    Wiring::from_box(Generator::ZSpider {
        wire,
        n_in,
        n_out,
        phase,
    })
}

/// X spider on qubit or bit wires; phase in turns. `X(1,1,0.5)` is NOT.
pub fn x(wire: WireKind, n_in: usize, n_out: usize, phase: Param) -> Diagram {
    Wiring::from_box(Generator::XSpider {
        wire,
        n_in,
        n_out,
        phase,
    })
}

/// Phase-free spider on Fock wires: all legs carry the same occupation.
pub fn fock_spider(wire: WireKind, n_in: usize, n_out: usize) -> Diagram {
    Wiring::from_box(Generator::ZSpider {
        wire,
        n_in,
        n_out,
        phase: Param::lit(0.0),
    })
}

pub fn hadamard() -> Diagram {
    Wiring::from_box(Generator::Hadamard)
}

pub fn w_split(legs: usize) -> Diagram {
    Wiring::from_box(Generator::WSplit { legs })
}

pub fn w_merge(legs: usize) -> Diagram {
    Wiring::from_box(Generator::WMerge { legs })
}

pub fn create(occupations: &[u64]) -> Diagram {
    Wiring::from_box(Generator::Create {
        occupations: occupations.to_vec(),
        internal: None,
    })
}

/// Fock-state preparation with per-photon internal states (one state per
/// created photon, common dimension).
pub fn create_with_states(occupations: &[u64], states: Vec<InternalState>) -> Result<Diagram> {
    let photons: u64 = occupations.iter().sum();
    if states.len() as u64 != photons {
        return Err(Error::DimensionMismatch(states.len(), photons as usize));
    }
    if let Some(first) = states.first() {
        for s in &states {
            if s.dim() != first.dim() {
                return Err(Error::DimensionMismatch(s.dim(), first.dim()));
            }
        }
    }
    Ok(Wiring::from_box(Generator::Create {
        occupations: occupations.to_vec(),
        internal: Some(states),
    }))
}

pub fn select(occupations: &[u64]) -> Diagram {
    Wiring::from_box(Generator::Select {
        occupations: occupations.to_vec(),
        internal: None,
    })
}

pub fn num_op() -> Diagram {
    Wiring::from_box(Generator::NumOp)
}

pub fn phase(psi: Param) -> Diagram {
    Wiring::from_box(Generator::LoGate(LoKind::Phase(psi)))
}

pub fn tbs(theta: Param) -> Diagram {
    Wiring::from_box(Generator::LoGate(LoKind::Tbs(theta)))
}

pub fn bbs(bias: Param) -> Diagram {
    Wiring::from_box(Generator::LoGate(LoKind::Bbs(bias)))
}

/// The balanced beamsplitter `BBS(0)`, `2^{-1/2} [[1, i], [i, 1]]`.
pub fn bs() -> Diagram {
    bbs(Param::lit(0.0))
}

pub fn hadamard_bs() -> Diagram {
    Wiring::from_box(Generator::LoGate(LoKind::HadamardBs { dagger: false }))
}

/// Two-phase Mach-Zehnder interferometer:
/// `(Phase(psi) @ qmode) >> HadamardBS >> (Phase(phi) @ qmode) >> HadamardBS`.
pub fn mzi(psi: Param, phi: Param) -> Diagram {
    let idm = Diagram::id(qmode());
    phase(psi)
        .tensor(&idm)
        .then(&hadamard_bs())
        .unwrap()
        .then(&phase(phi).tensor(&idm))
        .unwrap()
        .then(&hadamard_bs())
        .unwrap()
}

/// Brick-wall rectangular MZI mesh: odd layers pair modes (0,1),(2,3),...;
/// even layers pair (1,2),(3,4),...; each MZI gets two fresh symbols.
pub fn ansatz(width: usize, layers: usize) -> Diagram {
    assert!(width >= 2 && layers >= 1, "ansatz needs width >= 2, layers >= 1");
    let mut d = Diagram::id(Ty::repeat(WireKind::Qmode, width));
    for layer in 0..layers {
        let start = layer % 2;
        let mut row = Diagram::id(Ty::empty());
        let mut pos = 0;
        while pos < width {
            if pos == 0 && start == 1 {
                row = row.tensor(&Diagram::id(qmode()));
                pos += 1;
                continue;
            }
            if pos + 1 < width {
                let a = Param::sym(format!("th_{layer}_{pos}"));
                let b = Param::sym(format!("ph_{layer}_{pos}"));
                row = row.tensor(&mzi(a, b));
                pos += 2;
            } else {
                row = row.tensor(&Diagram::id(qmode()));
                pos += 1;
            }
        }
        d = d.then(&row).expect("ansatz layers compose");
    }
    d
}

/// Dual-rail encoder on one qubit: `|0> -> |1,0>`, `|1> -> |0,1>`.
pub fn dual_rail() -> Diagram {
    Wiring::from_box(Generator::DualRail {
        internal: None,
        decode: false,
    })
}

pub fn dual_rail_with_state(state: InternalState) -> Diagram {
    Wiring::from_box(Generator::DualRail {
        internal: Some(state),
        decode: false,
    })
}

/// `n` parallel dual-rail encoders.
pub fn dual_rail_n(n: usize) -> Diagram {
    let mut d = Diagram::id(Ty::empty());
    for _ in 0..n {
        d = d.tensor(&dual_rail());
    }
    d
}

pub fn cast(from: WireKind, to: WireKind) -> Diagram {
    Wiring::from_box(Generator::Cast { from, to })
}

/// Scalar diagram.
pub fn scalar(value: Complex64) -> Diagram {
    Diagram::scalar(value)
}

// --- classical gates -------------------------------------------------------

fn classical_fn(
    name: &str,
    dom: Ty,
    cod: Ty,
    f: impl Fn(&[u64]) -> Option<Vec<u64>> + Send + Sync + 'static,
) -> Diagram {
    Wiring::from_box(Generator::Classical(ClassicalFn {
        name: name.into(),
        dom,
        cod,
        func: Arc::new(f),
        transposed: false,
    }))
}

pub fn not_gate() -> Diagram {
    classical_fn("Not", bit(), bit(), |v| Some(vec![1 - v[0]]))
}

pub fn xor() -> Diagram {
    classical_fn("Xor", Ty::repeat(WireKind::Bit, 2), bit(), |v| {
        Some(vec![v[0] ^ v[1]])
    })
}

pub fn and() -> Diagram {
    classical_fn("And", Ty::repeat(WireKind::Bit, 2), bit(), |v| {
        Some(vec![v[0] & v[1]])
    })
}

pub fn or() -> Diagram {
    classical_fn("Or", Ty::repeat(WireKind::Bit, 2), bit(), |v| {
        Some(vec![v[0] | v[1]])
    })
}

/// Sums `k` mode values into one.
pub fn add(k: usize) -> Diagram {
    classical_fn(
        &format!("Add({k})"),
        Ty::repeat(WireKind::Mode, k),
        Ty::single(WireKind::Mode),
        |v| Some(vec![v.iter().sum()]),
    )
}

/// Truncated subtraction on naturals: `max(a - b, 0)`.
pub fn sub() -> Diagram {
    classical_fn(
        "Sub",
        Ty::repeat(WireKind::Mode, 2),
        Ty::single(WireKind::Mode),
        |v| Some(vec![v[0].saturating_sub(v[1])]),
    )
}

pub fn multiply() -> Diagram {
    classical_fn(
        "Multiply",
        Ty::repeat(WireKind::Mode, 2),
        Ty::single(WireKind::Mode),
        |v| Some(vec![v[0] * v[1]]),
    )
}

/// Floor division; division by zero has no transition (amplitude 0).
pub fn divide() -> Diagram {
    classical_fn(
        "Divide",
        Ty::repeat(WireKind::Mode, 2),
        Ty::single(WireKind::Mode),
        |v| {
            if v[1] == 0 {
                log::warn!("Divide: division by zero maps to amplitude 0");
                None
            } else {
                Some(vec![v[0] / v[1]])
            }
        },
    )
}

/// Parity of a mode value as a bit.
pub fn mod2() -> Diagram {
    classical_fn("Mod2", Ty::single(WireKind::Mode), bit(), |v| {
        Some(vec![v[0] % 2])
    })
}

/// Keeps only runs where the bit equals `value` (sub-normalizing effect).
pub fn postselect_bit(value: u64) -> Diagram {
    classical_fn(
        &format!("PostselectBit({value})"),
        bit(),
        Ty::empty(),
        move |v| if v[0] == value { Some(vec![]) } else { None },
    )
}

/// GF(2) linear map `bit^n -> bit^m` given by an m x n matrix.
pub fn binary_matrix(rows: Vec<Vec<u8>>) -> Result<Diagram> {
    let m = rows.len();
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    for r in &rows {
        if r.len() != n {
            return Err(Error::ShapeMismatch("ragged binary matrix".into()));
        }
        if r.iter().any(|&b| b > 1) {
            return Err(Error::Parse("binary matrix entries must be 0/1".into()));
        }
    }
    Ok(classical_fn(
        "BinaryMatrix",
        Ty::repeat(WireKind::Bit, n),
        Ty::repeat(WireKind::Bit, m),
        move |v| {
            Some(
                rows.iter()
                    .map(|row| {
                        row.iter()
                            .zip(v)
                            .map(|(&a, &b)| (a as u64) * b)
                            .sum::<u64>()
                            % 2
                    })
                    .collect(),
            )
        },
    ))
}

/// Explicit-table classical function over capped mode values; the table must
/// cover every input below the caps.
pub fn classical_function(
    name: &str,
    in_caps: Vec<u64>,
    cod: Ty,
    table: std::collections::BTreeMap<Vec<u64>, Vec<u64>>,
) -> Result<Diagram> {
    for input in enumerate_states(&in_caps) {
        if !table.contains_key(&input) {
            return Err(Error::TableIncomplete(input));
        }
    }
    let dom = Ty::repeat(WireKind::Mode, in_caps.len());
    Ok(classical_fn(name, dom, cod, move |v| {
        table.get(v).cloned()
    }))
}

/// Classical function from a closure; inputs outside the function's domain
/// get amplitude 0.
pub fn classical_fn_from(
    name: &str,
    dom: Ty,
    cod: Ty,
    f: impl Fn(&[u64]) -> Option<Vec<u64>> + Send + Sync + 'static,
) -> Diagram {
    classical_fn(name, dom, cod, f)
}

// --- bit-controlled gates ---------------------------------------------------

/// `bit (x) Q -> Q`: identity for control 0, `body` for control 1; the bit is
/// consumed. The body must have equal dom and cod.
pub fn bit_controlled(body: Diagram) -> Result<Diagram> {
    if body.dom() != body.cod() {
        return Err(Error::TypeMismatch {
            index: 0,
            expected: body.dom().to_string(),
            found: body.cod().to_string(),
        });
    }
    Ok(Wiring::from_box(Generator::BitCtrl {
        body: Box::new(body),
        adjoint: false,
    }))
}

/// Pauli-X on a qubit, controlled by a bit.
pub fn ctrl_x() -> Diagram {
    bit_controlled(x(WireKind::Qubit, 1, 1, Param::lit(0.5))).expect("X body is square")
}

/// Pauli-Z on a qubit, controlled by a bit.
pub fn ctrl_z() -> Diagram {
    bit_controlled(z(WireKind::Qubit, 1, 1, Param::lit(0.5))).expect("Z body is square")
}

/// Single-mode phase shift controlled by a bit.
pub fn bit_controlled_phase_shift(psi: Param) -> Diagram {
    bit_controlled(phase(psi)).expect("Phase body is square")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_spider_identity() {
        let g = Generator::ZSpider {
            wire: WireKind::Qubit,
            n_in: 1,
            n_out: 1,
            phase: Param::lit(0.0),
        };
        for b in 0..2u64 {
            let t = g.transitions(&[b], &[2], &[2]).unwrap();
            assert_eq!(t.len(), 1);
            assert_eq!(t[0].out, vec![b]);
            assert!((t[0].amp - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn classical_not_flips() {
        let d = not_gate();
        let g = &d.nodes()[0].gen;
        let t = g.transitions(&[0], &[2], &[2]).unwrap();
        assert_eq!(t[0].out, vec![1]);
    }

    #[test]
    fn w_split_on_two_photons() {
        let g = Generator::WSplit { legs: 2 };
        let t = g.transitions(&[2], &[3], &[3, 3]).unwrap();
        // |2> -> |2,0> + sqrt(2)|1,1> + |0,2>
        assert_eq!(t.len(), 3);
        let find = |a: u64, b: u64| {
            t.iter()
                .find(|tr| tr.out == vec![a, b])
                .map(|tr| tr.amp)
                .unwrap()
        };
        assert!((find(2, 0) - c(1.0, 0.0)).norm() < 1e-12);
        assert!((find(1, 1) - c(2f64.sqrt(), 0.0)).norm() < 1e-12);
        assert!((find(0, 2) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn bs_is_balanced() {
        let g = Generator::LoGate(LoKind::Bbs(Param::lit(0.0)));
        let t = g.transitions(&[1, 1], &[2, 2], &[3, 3]).unwrap();
        let amp_11 = t.iter().find(|tr| tr.out == vec![1, 1]);
        assert!(amp_11.is_none(), "HOM dip: coincidence amplitude vanishes");
        let amp_20 = t.iter().find(|tr| tr.out == vec![2, 0]).unwrap();
        assert!((amp_20.amp.norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tbs_zero_is_identity() {
        let g = Generator::LoGate(LoKind::Tbs(Param::lit(0.0)));
        let t = g.transitions(&[1, 0], &[2, 2], &[2, 2]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].out, vec![1, 0]);
        assert!((t[0].amp - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ansatz_symbol_count() {
        // Brick-wall on 3 modes, 4 layers: odd layers host one MZI, even
        // layers host one MZI; 4 MZIs, two symbols each.
        let d = ansatz(3, 4);
        assert_eq!(d.free_symbols().len(), 8);
        let d2 = ansatz(2, 1);
        assert_eq!(d2.free_symbols().len(), 2);
    }

    #[test]
    fn dagger_involution_on_boxes() {
        let gens = vec![
            Generator::ZSpider {
                wire: WireKind::Qubit,
                n_in: 1,
                n_out: 2,
                phase: Param::lit(0.25),
            },
            Generator::WSplit { legs: 3 },
            Generator::Create {
                occupations: vec![1, 1],
                internal: None,
            },
            Generator::LoGate(LoKind::Tbs(Param::lit(0.3))),
            Generator::LoGate(LoKind::HadamardBs { dagger: false }),
        ];
        for g in gens {
            let gg = g.dagger().unwrap().dagger().unwrap();
            assert_eq!(g, gg);
        }
    }
}
