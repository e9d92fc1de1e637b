//! Matrix permanents and permanent-based linear-optical amplitudes.
//!
//! `naive` is the factorial expansion kept as an oracle for small matrices;
//! `ryser` and `glynn` use Gray-code incremental updates and scale as
//! O(2^k k).

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermAlgo {
    Naive,
    Ryser,
    Glynn,
    /// Naive for k <= 2, Glynn above.
    Auto,
}

/// Permanent of a square complex matrix.
pub fn permanent(a: &Array2<Complex64>, algo: PermAlgo) -> Result<Complex64> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    Ok(match algo {
        PermAlgo::Naive => permanent_naive(a),
        PermAlgo::Ryser => permanent_ryser(a),
        PermAlgo::Glynn => permanent_glynn(a),
        PermAlgo::Auto => {
            if r <= 2 {
                permanent_naive(a)
            } else {
                permanent_glynn(a)
            }
        }
    })
}

/// Factorial expansion over all permutations.
pub fn permanent_naive(a: &Array2<Complex64>) -> Complex64 {
    let n = a.nrows();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    // Heap's algorithm, iterative.
    let mut counters = vec![0usize; n];
    let term = |p: &[usize]| -> Complex64 {
        p.iter()
            .enumerate()
            .fold(Complex64::new(1.0, 0.0), |acc, (i, &j)| acc * a[(i, j)])
    };
    total += term(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            total += term(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    total
}

/// Ryser's inclusion-exclusion formula with Gray-code row-sum updates.
pub fn permanent_ryser(a: &Array2<Complex64>) -> Complex64 {
    let n = a.nrows();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    assert!(n < 64, "ryser limited to n < 64");
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray_prev: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let gray = k ^ (k >> 1);
        let bit = (gray ^ gray_prev).trailing_zeros() as usize;
        if gray & (1 << bit) != 0 {
            for i in 0..n {
                row_sums[i] += a[(i, bit)];
            }
        } else {
            for i in 0..n {
                row_sums[i] -= a[(i, bit)];
            }
        }
        gray_prev = gray;
        let prod = row_sums
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, v| acc * v);
        let sign = if gray.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    let outer_sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    total * outer_sign
}

/// Glynn's formula over +-1 vectors with Gray-code column-sum updates.
pub fn permanent_glynn(a: &Array2<Complex64>) -> Complex64 {
    let n = a.nrows();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if n == 1 {
        return a[(0, 0)];
    }
    assert!(n < 64, "glynn limited to n < 64");
    // delta_0 fixed at +1; Gray code over the remaining n-1 signs.
    let mut col_sums: Vec<Complex64> = (0..n).map(|j| a.column(j).sum()).collect();
    let mut total = col_sums
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, v| acc * v);
    let mut sign = 1.0;
    let mut gray_prev: u64 = 0;
    for k in 1u64..(1u64 << (n - 1)) {
        let gray = k ^ (k >> 1);
        let bit = (gray ^ gray_prev).trailing_zeros() as usize;
        // Sign of delta_{bit+1} flipped: adjust column sums by 2*row.
        let row = bit + 1;
        let flipped_on = gray & (1 << bit) != 0;
        let factor = if flipped_on { -2.0 } else { 2.0 };
        for j in 0..n {
            col_sums[j] += a[(row, j)] * factor;
        }
        gray_prev = gray;
        sign = -sign;
        let prod = col_sums
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, v| acc * v);
        total += prod * sign;
    }
    total / 2f64.powi(n as i32 - 1)
}

/// An m-mode interferometer with a Fock input.
#[derive(Clone, Debug)]
pub struct Interferometer {
    u: Array2<Complex64>,
    input: Vec<u64>,
}

impl Interferometer {
    /// Checks unitarity to 1e-9 and shape agreement.
    pub fn new(u: Array2<Complex64>, input: Vec<u64>) -> Result<Self> {
        let (r, c) = u.dim();
        if r != c {
            return Err(Error::NotSquare(r, c));
        }
        if input.len() != r {
            return Err(Error::ShapeMismatch(format!(
                "{} occupations for a {r}x{r} interferometer",
                input.len()
            )));
        }
        let dev = unitarity_deviation(&u);
        if dev > 1e-9 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Interferometer { u, input })
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.u
    }

    pub fn input(&self) -> &[u64] {
        &self.input
    }

    pub fn modes(&self) -> usize {
        self.input.len()
    }

    pub fn photons(&self) -> u64 {
        self.input.iter().sum()
    }
}

pub fn unitarity_deviation(u: &Array2<Complex64>) -> f64 {
    let n = u.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for k in 0..n {
                dot += u[(i, k)] * u[(j, k)].conj();
            }
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((dot - target).norm());
        }
    }
    dev
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Fock-basis transition amplitude of a linear interferometer:
/// `Perm(U_{t,s}) / sqrt(prod s_i! prod t_j!)`, where `U_{t,s}` repeats
/// column `i` `s_i` times and row `j` `t_j` times.
pub fn amplitude(
    u: &Array2<Complex64>,
    s: &[u64],
    t: &[u64],
    algo: PermAlgo,
) -> Result<Complex64> {
    let n_in: u64 = s.iter().sum();
    let n_out: u64 = t.iter().sum();
    if n_in != n_out {
        return Err(Error::PhotonNumberMismatch(n_in, n_out));
    }
    let cols: Vec<usize> = s
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat(i).take(k as usize))
        .collect();
    let rows: Vec<usize> = t
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| std::iter::repeat(j).take(k as usize))
        .collect();
    let k = cols.len();
    let mut sub = Array2::zeros((k, k));
    for (r, &ri) in rows.iter().enumerate() {
        for (c, &ci) in cols.iter().enumerate() {
            sub[(r, c)] = u[(ri, ci)];
        }
    }
    let norm: f64 = s.iter().map(|&x| factorial(x)).product::<f64>()
        * t.iter().map(|&x| factorial(x)).product::<f64>();
    Ok(permanent(&sub, algo)? / norm.sqrt())
}

/// All occupation patterns of `n` photons over `m` modes.
pub fn compositions(n: u64, m: usize) -> Vec<Vec<u64>> {
    if m == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    let mut current = vec![0u64; m];
    fn rec(out: &mut Vec<Vec<u64>>, current: &mut Vec<u64>, idx: usize, left: u64) {
        if idx == current.len() - 1 {
            current[idx] = left;
            out.push(current.clone());
            return;
        }
        for k in (0..=left).rev() {
            current[idx] = k;
            rec(out, current, idx + 1, left - k);
        }
    }
    rec(&mut out, &mut current, 0, n);
    out.sort();
    out
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Full output distribution of an interferometer over all patterns with the
/// same total photon number.
pub fn prob_dist(intf: &Interferometer, algo: PermAlgo) -> Result<BTreeMap<Vec<u64>, f64>> {
    let n = intf.photons();
    let m = intf.modes();
    let count = binomial(n + m as u64 - 1, n);
    if count > 1_000_000 {
        return Err(Error::TooManyOutcomes(count));
    }
    let mut out = BTreeMap::new();
    for t in compositions(n, m) {
        let amp = amplitude(&intf.u, &intf.input, &t, algo)?;
        out.insert(t, amp.norm_sqr());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn empty_matrix_permanent_is_one() {
        let a: Array2<Complex64> = Array2::zeros((0, 0));
        assert_eq!(permanent_naive(&a), c(1.0, 0.0));
        assert_eq!(permanent_ryser(&a), c(1.0, 0.0));
        assert_eq!(permanent_glynn(&a), c(1.0, 0.0));
    }

    #[test]
    fn two_by_two_definition() {
        let a = array![[c(1.0, 0.0), c(2.0, 0.0)], [c(3.0, 0.0), c(4.0, 0.0)]];
        // ad + bc = 4 + 6
        for algo in [PermAlgo::Naive, PermAlgo::Ryser, PermAlgo::Glynn] {
            let p = permanent(&a, algo).unwrap();
            assert!((p - c(10.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn algorithms_agree_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.gen_range(1..=6);
            let a =
                Array2::from_shape_fn((n, n), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let pn = permanent_naive(&a);
            let pr = permanent_ryser(&a);
            let pg = permanent_glynn(&a);
            let scale = pn.norm().max(1e-30);
            assert!((pn - pr).norm() / scale < 1e-9, "ryser disagrees");
            assert!((pn - pg).norm() / scale < 1e-9, "glynn disagrees");
        }
    }

    #[test]
    fn row_scaling_is_multilinear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let a = Array2::from_shape_fn((n, n), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let lambda = c(0.7, -1.3);
        let mut b = a.clone();
        for j in 0..n {
            b[(2, j)] *= lambda;
        }
        let pa = permanent_ryser(&a);
        let pb = permanent_ryser(&b);
        assert!((pb - pa * lambda).norm() < 1e-9 * pa.norm().max(1.0));
    }

    #[test]
    fn hom_amplitudes() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = array![[c(r, 0.0), c(0.0, r)], [c(0.0, r), c(r, 0.0)]];
        let a11 = amplitude(&u, &[1, 1], &[1, 1], PermAlgo::Auto).unwrap();
        assert!(a11.norm() < 1e-12);
        let a20 = amplitude(&u, &[1, 1], &[2, 0], PermAlgo::Auto).unwrap();
        assert!((a20.norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_amplitude_is_one() {
        let u = Array2::from_shape_fn((3, 3), |(i, j)| {
            if i == j {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let s = [2, 1, 0];
        let a = amplitude(&u, &s, &s, PermAlgo::Auto).unwrap();
        assert!((a - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn prob_dist_sums_to_one() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = array![[c(r, 0.0), c(0.0, r)], [c(0.0, r), c(r, 0.0)]];
        let intf = Interferometer::new(u, vec![1, 1]).unwrap();
        let dist = prob_dist(&intf, PermAlgo::Auto).unwrap();
        let total: f64 = dist.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((dist[&vec![2, 0]] - 0.5).abs() < 1e-12);
        assert!(dist[&vec![1, 1]] < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Diagram-level permanent backend
// ---------------------------------------------------------------------------

use crate::diagram::{Bindings, DiagramBox, WireKind};
use crate::error::Result as PResult;
use crate::generators::{Diagram, DiagramSum, Generator};

/// Composes the single-photon matrices of a linear-optical diagram into its
/// m x m mode unitary. The diagram may contain only LO gates, identities and
/// swaps on `qmode`; anything else names the offending box.
pub fn extract_unitary(d: &Diagram) -> PResult<Array2<Complex64>> {
    let m = d.dom().len();
    if d.dom().iter().any(|k| k != WireKind::Qmode)
        || d.cod().iter().any(|k| k != WireKind::Qmode)
        || d.cod().len() != m
    {
        return Err(Error::BackendIneligible(
            "boundary is not qmode^m -> qmode^m".into(),
        ));
    }
    if d.scalars()
        .iter()
        .any(|s| (s - Complex64::new(1.0, 0.0)).norm() > 1e-12)
    {
        return Err(Error::BackendIneligible("Scalar".into()));
    }
    let mut slot: std::collections::BTreeMap<usize, usize> = d
        .dom_wires()
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, i))
        .collect();
    let mut u = Array2::from_shape_fn((m, m), |(i, j)| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    for node in d.nodes() {
        let gate = match &node.gen {
            Generator::LoGate(kind) => kind.matrix()?,
            other => return Err(Error::BackendIneligible(other.box_name())),
        };
        let slots: Vec<usize> = node.inputs.iter().map(|w| slot[w]).collect();
        let mut embed = Array2::from_shape_fn((m, m), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for (a, &sa) in slots.iter().enumerate() {
            for (b, &sb) in slots.iter().enumerate() {
                embed[(sa, sb)] = gate[(a, b)];
            }
        }
        u = embed.dot(&u);
        for (w, &s) in node.outputs.iter().zip(slots.iter()) {
            slot.insert(*w, s);
        }
    }
    // Reorder rows so row j is the j-th codomain wire.
    let mut out = Array2::zeros((m, m));
    for (j, w) in d.cod_wires().iter().enumerate() {
        let s = slot[w];
        for k in 0..m {
            out[(j, k)] = u[(s, k)];
        }
    }
    Ok(out)
}

type PatternMap = std::collections::HashMap<std::collections::BTreeMap<usize, u64>, Complex64>;

/// A linear-optical block being accumulated during chain evaluation.
struct LoBlock {
    in_wires: Vec<usize>,
    out_wires: Vec<usize>,
    u: Array2<Complex64>,
}

impl LoBlock {
    fn new() -> Self {
        LoBlock {
            in_wires: Vec::new(),
            out_wires: Vec::new(),
            u: Array2::zeros((0, 0)),
        }
    }

    fn is_empty(&self) -> bool {
        self.in_wires.is_empty()
    }

    fn grow(&mut self) {
        let n = self.u.nrows();
        let mut u = Array2::zeros((n + 1, n + 1));
        for i in 0..n {
            for j in 0..n {
                u[(i, j)] = self.u[(i, j)];
            }
        }
        u[(n, n)] = Complex64::new(1.0, 0.0);
        self.u = u;
    }

    fn absorb(&mut self, gate: &Array2<Complex64>, inputs: &[usize], outputs: &[usize]) {
        let mut pos = Vec::with_capacity(inputs.len());
        for &w in inputs {
            let p = match self.out_wires.iter().position(|&x| x == w) {
                Some(p) => p,
                None => {
                    self.in_wires.push(w);
                    self.out_wires.push(w);
                    self.grow();
                    self.out_wires.len() - 1
                }
            };
            pos.push(p);
        }
        let n = self.u.nrows();
        let mut embed = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for (a, &pa) in pos.iter().enumerate() {
            for (b, &pb) in pos.iter().enumerate() {
                embed[(pa, pb)] = gate[(a, b)];
            }
        }
        self.u = embed.dot(&self.u);
        for (&w_out, &p) in outputs.iter().zip(pos.iter()) {
            self.out_wires[p] = w_out;
        }
    }

    /// Applies the block to every pattern by enumerating output occupations
    /// with permanent-based amplitudes.
    fn flush(&mut self, state: &mut PatternMap, algo: PermAlgo) -> PResult<()> {
        if self.is_empty() {
            return Ok(());
        }
        let mut next: PatternMap = std::collections::HashMap::new();
        for (pattern, amp) in state.drain() {
            let mut rest = pattern.clone();
            let mut occ_in = Vec::with_capacity(self.in_wires.len());
            for &w in &self.in_wires {
                occ_in.push(rest.remove(&w).ok_or_else(|| {
                    Error::InvalidDiagram("LO block input wire missing from pattern".into())
                })?);
            }
            let n: u64 = occ_in.iter().sum();
            for occ_out in compositions(n, self.in_wires.len()) {
                let a = amplitude(&self.u, &occ_in, &occ_out, algo)?;
                if a.norm() < 1e-16 {
                    continue;
                }
                let mut out_pattern = rest.clone();
                for (&w, &o) in self.out_wires.iter().zip(occ_out.iter()) {
                    out_pattern.insert(w, o);
                }
                *next
                    .entry(out_pattern)
                    .or_insert(Complex64::new(0.0, 0.0)) += amp * a;
            }
        }
        *state = next;
        *self = LoBlock::new();
        Ok(())
    }
}

enum ChainOp {
    Source { wires: Vec<usize>, occs: Vec<u64> },
    Effect { wires: Vec<usize>, occs: Vec<u64> },
    Lo { inputs: Vec<usize>, outputs: Vec<usize>, u: Array2<Complex64> },
    Up { w_in: usize, w_out: usize },
    Down { w_in: usize, w_out: usize },
    Num { w_in: usize, w_out: usize },
}

/// Parses a diagram into chain operations: sources, LO gates, single-mode
/// ladder composites (`Create(1)`-fed merges, `Select(1)`-drained splits,
/// `NumOp`), and effects. Anything else is ineligible.
fn parse_chain(d: &Diagram) -> PResult<Vec<ChainOp>> {
    if d.dom().len() != 0 {
        return Err(Error::BackendIneligible("open inputs".into()));
    }
    // Consumer of each wire (node index), for ladder matching.
    let mut consumer: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for (i, node) in d.nodes().iter().enumerate() {
        for &w in &node.inputs {
            consumer.insert(w, i);
        }
    }
    let nodes = d.nodes();
    let mut skip = vec![false; nodes.len()];
    let mut ops = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        if skip[i] {
            continue;
        }
        match &node.gen {
            Generator::Create { occupations, .. } => {
                // A single-photon source feeding a 2-merge is a creation op.
                if occupations.as_slice() == [1] {
                    if let Some(&ci) = consumer.get(&node.outputs[0]) {
                        if let Generator::WMerge { legs: 2 } = nodes[ci].gen {
                            let other = if nodes[ci].inputs[0] == node.outputs[0] {
                                nodes[ci].inputs[1]
                            } else {
                                nodes[ci].inputs[0]
                            };
                            ops.push(ChainOp::Up {
                                w_in: other,
                                w_out: nodes[ci].outputs[0],
                            });
                            skip[ci] = true;
                            continue;
                        }
                    }
                }
                ops.push(ChainOp::Source {
                    wires: node.outputs.clone(),
                    occs: occupations.clone(),
                });
            }
            Generator::WSplit { legs: 2 } => {
                // A 2-split drained by Select(1) is an annihilation op.
                let mut matched = false;
                for k in 0..2 {
                    let out = node.outputs[k];
                    if let Some(&ci) = consumer.get(&out) {
                        if skip[ci] {
                            continue;
                        }
                        if let Generator::Select { occupations, .. } = &nodes[ci].gen {
                            if occupations.as_slice() == [1] && nodes[ci].inputs.len() == 1 {
                                ops.push(ChainOp::Down {
                                    w_in: node.inputs[0],
                                    w_out: node.outputs[1 - k],
                                });
                                skip[ci] = true;
                                matched = true;
                                break;
                            }
                        }
                    }
                }
                if !matched {
                    return Err(Error::BackendIneligible(node.gen.box_name()));
                }
            }
            Generator::Select { occupations, .. } => {
                ops.push(ChainOp::Effect {
                    wires: node.inputs.clone(),
                    occs: occupations.clone(),
                });
            }
            Generator::NumOp => ops.push(ChainOp::Num {
                w_in: node.inputs[0],
                w_out: node.outputs[0],
            }),
            Generator::LoGate(kind) => ops.push(ChainOp::Lo {
                inputs: node.inputs.clone(),
                outputs: node.outputs.clone(),
                u: kind.matrix()?,
            }),
            other => return Err(Error::BackendIneligible(other.box_name())),
        }
    }
    Ok(ops)
}

/// Propagates a sparse Fock state through the chain; returns the final
/// pattern-to-amplitude map over the diagram's codomain wires.
fn run_chain(d: &Diagram, algo: PermAlgo) -> PResult<PatternMap> {
    let ops = parse_chain(d)?;
    let mut state: PatternMap = std::collections::HashMap::new();
    state.insert(std::collections::BTreeMap::new(), d.scalar_product());
    let mut block = LoBlock::new();
    for op in &ops {
        match op {
            ChainOp::Lo { inputs, outputs, u } => {
                block.absorb(u, inputs, outputs);
            }
            _ => {
                block.flush(&mut state, algo)?;
                match op {
                    ChainOp::Source { wires, occs } => {
                        for pattern in state.keys().cloned().collect::<Vec<_>>() {
                            let amp = state.remove(&pattern).unwrap();
                            let mut p = pattern;
                            for (&w, &o) in wires.iter().zip(occs.iter()) {
                                p.insert(w, o);
                            }
                            *state.entry(p).or_insert(Complex64::new(0.0, 0.0)) += amp;
                        }
                    }
                    ChainOp::Effect { wires, occs } => {
                        let mut next: PatternMap = std::collections::HashMap::new();
                        for (pattern, amp) in state.drain() {
                            let mut p = pattern;
                            let mut keep = true;
                            for (&w, &o) in wires.iter().zip(occs.iter()) {
                                match p.remove(&w) {
                                    Some(v) if v == o => {}
                                    _ => {
                                        keep = false;
                                        break;
                                    }
                                }
                            }
                            if keep {
                                *next.entry(p).or_insert(Complex64::new(0.0, 0.0)) += amp;
                            }
                        }
                        state = next;
                    }
                    ChainOp::Up { w_in, w_out } => {
                        let mut next: PatternMap = std::collections::HashMap::new();
                        for (pattern, amp) in state.drain() {
                            let mut p = pattern;
                            let n = p.remove(w_in).unwrap_or(0);
                            p.insert(*w_out, n + 1);
                            let factor = ((n + 1) as f64).sqrt();
                            *next.entry(p).or_insert(Complex64::new(0.0, 0.0)) +=
                                amp * factor;
                        }
                        state = next;
                    }
                    ChainOp::Down { w_in, w_out } => {
                        let mut next: PatternMap = std::collections::HashMap::new();
                        for (pattern, amp) in state.drain() {
                            let mut p = pattern;
                            let n = p.remove(w_in).unwrap_or(0);
                            if n == 0 {
                                continue;
                            }
                            p.insert(*w_out, n - 1);
                            let factor = (n as f64).sqrt();
                            *next.entry(p).or_insert(Complex64::new(0.0, 0.0)) +=
                                amp * factor;
                        }
                        state = next;
                    }
                    ChainOp::Num { w_in, w_out } => {
                        let mut next: PatternMap = std::collections::HashMap::new();
                        for (pattern, amp) in state.drain() {
                            let mut p = pattern;
                            let n = p.remove(w_in).unwrap_or(0);
                            if n == 0 {
                                continue;
                            }
                            p.insert(*w_out, n);
                            *next.entry(p).or_insert(Complex64::new(0.0, 0.0)) +=
                                amp * n as f64;
                        }
                        state = next;
                    }
                    ChainOp::Lo { .. } => unreachable!(),
                }
            }
        }
    }
    block.flush(&mut state, algo)?;
    Ok(state)
}

/// Output amplitudes of a closed-source linear-optical diagram, keyed by the
/// occupation pattern on the codomain wires.
pub fn eval_open_permanent(
    d: &Diagram,
    algo: PermAlgo,
) -> PResult<std::collections::BTreeMap<Vec<u64>, Complex64>> {
    let state = run_chain(d, algo)?;
    let mut out = std::collections::BTreeMap::new();
    for (pattern, amp) in state {
        let key: Vec<u64> = d
            .cod_wires()
            .iter()
            .map(|w| pattern.get(w).copied().unwrap_or(0))
            .collect();
        *out.entry(key).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }
    Ok(out)
}

/// Evaluates a closed scalar diagram sum through the permanent backend.
pub fn eval_scalar_permanent(expr: &DiagramSum, bindings: &Bindings) -> PResult<f64> {
    let mut total = Complex64::new(0.0, 0.0);
    for term in expr.substitute(bindings).terms() {
        if !term.dom().is_empty() || !term.cod().is_empty() {
            return Err(Error::ShapeMismatch("expectation is not scalar".into()));
        }
        let state = run_chain(term, PermAlgo::Auto)?;
        for (pattern, amp) in state {
            if pattern.is_empty() {
                total += amp;
            }
        }
    }
    if total.im.abs() > 1e-9 * total.norm().max(1.0) {
        return Err(Error::NotAState(format!(
            "expectation has imaginary part {:.3e}",
            total.im
        )));
    }
    Ok(total.re)
}

/// `<psi| O |psi>` through the permanent backend: the state is sources plus
/// linear optics, the observable a sum of ladder-operator products.
pub fn expectation_permanent(
    state: &Diagram,
    obs: &DiagramSum,
    bindings: &Bindings,
) -> PResult<f64> {
    let expr = crate::vqe::expectation(state, obs)?;
    eval_scalar_permanent(&expr, bindings)
}
