//! Bose-Hubbard Hamiltonians from lattice graphs, photonic expectation
//! diagrams, analytic diagram-level gradients, and a gradient-descent driver.

use crate::diagram::{Bindings, Ty, WireKind, Wiring};
use crate::error::{Error, Result};
use crate::diagram::DiagramBox;
use crate::generators::{self as gen, Diagram, DiagramSum, Generator, LoKind};
use crate::tn;
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::f64::consts::PI;

/// An undirected lattice graph; no self-loops, unique node ids.
#[derive(Clone, Debug)]
pub struct LatticeGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl LatticeGraph {
    pub fn new(nodes: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let set: BTreeSet<usize> = nodes.iter().copied().collect();
        if set.len() != nodes.len() {
            return Err(Error::InvalidDiagram("duplicate lattice node".into()));
        }
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::InvalidDiagram("self-loop in lattice".into()));
            }
            if !set.contains(&a) || !set.contains(&b) {
                return Err(Error::InvalidDiagram("edge references unknown node".into()));
            }
        }
        Ok(LatticeGraph { nodes, edges })
    }

    /// A chain of `n` sites, `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        LatticeGraph {
            nodes: (0..n).collect(),
            edges: (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        }
    }

    pub fn site_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Bose-Hubbard parameters: hopping `t`, on-site repulsion `u`, chemical
/// potential `mu`.
#[derive(Clone, Copy, Debug)]
pub struct BHParams {
    pub t: f64,
    pub u: f64,
    pub mu: f64,
}

/// The creation operator `|n> -> sqrt(n+1) |n+1>` as a one-mode diagram:
/// `(Create(1) @ qmode) >> W(2)†`.
pub fn creation_op() -> Diagram {
    gen::create(&[1])
        .tensor(&Diagram::id(crate::diagram::qmode()))
        .then(&gen::w_merge(2))
        .expect("creation composes")
}

/// The annihilation operator `|n> -> sqrt(n) |n-1>`: `W(2) >> Select(1) @ qmode`.
pub fn annihilation_op() -> Diagram {
    gen::w_split(2)
        .then(&gen::select(&[1]).tensor(&Diagram::id(crate::diagram::qmode())))
        .expect("annihilation composes")
}

/// Applies a one-mode diagram on wire `site` of an `n`-mode register.
fn on_site(op: &Diagram, site: usize, n: usize) -> Diagram {
    let mut d = Diagram::id(Ty::empty());
    for i in 0..n {
        if i == site {
            d = d.tensor(op);
        } else {
            d = d.tensor(&Diagram::id(crate::diagram::qmode()));
        }
    }
    d
}

/// The Bose-Hubbard Hamiltonian on the graph:
/// `-t sum_edges (a_i† a_j + a_j† a_i) + (U/2) sum_i a_i† a_i† a_i a_i - mu sum_i n_i`.
pub fn bose_hubbard(graph: &LatticeGraph, params: &BHParams) -> Result<DiagramSum> {
    let n = graph.site_count();
    if n == 0 {
        return Err(Error::InvalidDiagram("empty lattice".into()));
    }
    let index: std::collections::BTreeMap<usize, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i))
        .collect();
    let mut terms: Vec<Diagram> = Vec::new();

    // Hopping: -t (a_i† a_j + a_j† a_i) per edge.
    for &(u, v) in &graph.edges {
        let (i, j) = (index[&u], index[&v]);
        for (src, dst) in [(i, j), (j, i)] {
            let mut hop = on_site(&creation_op(), src, n)
                .then(&on_site(&annihilation_op(), dst, n))?;
            hop.push_scalar(Complex64::new(-params.t, 0.0));
            terms.push(hop);
        }
    }
    // On-site: (U/2) a† a† a a per site.
    for site in 0..n {
        let quartic = on_site(&annihilation_op(), site, n)
            .then(&on_site(&annihilation_op(), site, n))?
            .then(&on_site(&creation_op(), site, n))?
            .then(&on_site(&creation_op(), site, n))?;
        let mut term = quartic;
        term.push_scalar(Complex64::new(params.u / 2.0, 0.0));
        terms.push(term);
    }
    // Chemical potential: -mu n_i per site.
    for site in 0..n {
        let mut term = on_site(&gen::num_op(), site, n);
        term.push_scalar(Complex64::new(-params.mu, 0.0));
        terms.push(term);
    }
    DiagramSum::new(terms)
}

/// The monomial observable `⊗_k n_k^{p_k}` as a layer of repeated `NumOp`s.
pub fn monomial_layer(powers: &[u32]) -> Diagram {
    let mut layer = Diagram::id(Ty::empty());
    for &p in powers {
        let mut column = Diagram::id(crate::diagram::qmode());
        for _ in 0..p {
            column = column.then(&gen::num_op()).expect("NumOp composes");
        }
        layer = layer.tensor(&column);
    }
    layer
}

/// The closed expectation `<state| obs |state>` as a sum of scalar diagrams;
/// symbolic parameters are preserved.
pub fn expectation(state: &Diagram, obs: &DiagramSum) -> Result<DiagramSum> {
    if state.cod() != obs.dom() || obs.dom() != obs.cod() {
        return Err(Error::TypeMismatch {
            index: 0,
            expected: state.cod().to_string(),
            found: obs.dom().to_string(),
        });
    }
    let dag = state.dagger()?;
    let mut terms = Vec::new();
    for t in obs.terms() {
        terms.push(state.then(t)?.then(&dag)?);
    }
    DiagramSum::new(terms)
}

/// One factor of the product rule: a scaled replacement diagram for the
/// derivative of a box with respect to `sym`.
fn box_derivative(g: &Generator, sym: &str) -> Result<Vec<(Complex64, Diagram)>> {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    match g {
        Generator::LoGate(LoKind::Phase(p)) => {
            let coeff = p.coefficient_of(sym);
            if coeff == 0.0 {
                return Ok(vec![]);
            }
            let replacement = gen::num_op()
                .then(&gen::phase(p.clone()))
                .expect("one-mode chain");
            Ok(vec![(two_pi_i * coeff, replacement)])
        }
        Generator::LoGate(kind @ (LoKind::Tbs(_) | LoKind::Bbs(_))) => {
            let (p, dtheta) = match kind {
                LoKind::Tbs(p) => (p, 1.0),
                // BBS(b) = TBS((1+b)/8): chain rule factor 1/8.
                LoKind::Bbs(p) => (p, 1.0 / 8.0),
                _ => unreachable!(),
            };
            let coeff = p.coefficient_of(sym) * dtheta;
            if coeff == 0.0 {
                return Ok(vec![]);
            }
            let gate = Wiring::from_box(Generator::LoGate(kind.clone()));
            let idm = Diagram::id(crate::diagram::qmode());
            let hop_01 = creation_op().tensor(&annihilation_op());
            let hop_10 = annihilation_op().tensor(&creation_op());
            let _ = idm;
            Ok(vec![
                (two_pi_i * coeff, gate.then(&hop_01).expect("two modes")),
                (two_pi_i * coeff, gate.then(&hop_10).expect("two modes")),
            ])
        }
        other => {
            let mut syms = BTreeSet::new();
            other.collect_symbols(&mut syms);
            if syms.contains(sym) {
                Err(Error::GradUnsupported(other.box_name()))
            } else {
                Ok(vec![])
            }
        }
    }
}

/// Analytic derivative of a diagram sum by the product rule over parameter
/// occurrences; conjugate copies contribute through their negated phase
/// coefficients. Returns the zero expression when `sym` does not occur.
pub fn grad(expr: &DiagramSum, sym: &str) -> Result<DiagramSum> {
    let mut terms: Vec<Diagram> = Vec::new();
    for term in expr.terms() {
        for (idx, node) in term.nodes().iter().enumerate() {
            for (scale, replacement) in box_derivative(&node.gen, sym)? {
                let mut new_term = term.replace_node(idx, &replacement)?;
                new_term.push_scalar(scale);
                terms.push(new_term);
            }
        }
    }
    if terms.is_empty() {
        // Zero expression with the boundary of the input.
        let mut zero = expr.terms()[0].clone();
        zero.push_scalar(Complex64::new(0.0, 0.0));
        terms.push(zero);
    }
    DiagramSum::new(terms)
}

/// Evaluates a closed (scalar) diagram sum on the tensor-network backend.
pub fn eval_scalar_tn(expr: &DiagramSum, bindings: &Bindings) -> Result<f64> {
    let mut total = Complex64::new(0.0, 0.0);
    for term in expr.substitute(bindings).terms() {
        let ev = tn::eval_diagram(term)?;
        if ev.tensor.ndim() != 0 {
            return Err(Error::ShapeMismatch("expectation is not scalar".into()));
        }
        total += ev.tensor[ndarray::IxDyn(&[])];
    }
    if total.im.abs() > 1e-9 * total.norm().max(1.0) {
        return Err(Error::NotAState(format!(
            "expectation has imaginary part {:.3e}",
            total.im
        )));
    }
    Ok(total.re)
}

/// One recorded step of gradient descent.
#[derive(Clone, Debug)]
pub struct DescentStep {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub symbols: Vec<String>,
    pub steps: Vec<DescentStep>,
}

impl Trajectory {
    pub fn initial_energy(&self) -> f64 {
        self.steps.first().expect("nonempty").energy
    }

    pub fn final_energy(&self) -> f64 {
        self.steps.last().expect("nonempty").energy
    }

    /// CSV with columns `step, energy, x_0.., grad_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,energy");
        for s in &self.symbols {
            out.push_str(&format!(",{s}"));
        }
        out.push_str(",grad_norm\n");
        for (i, step) in self.steps.iter().enumerate() {
            let norm: f64 = step.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            out.push_str(&format!("{i},{:.12e}", step.energy));
            for x in &step.x {
                out.push_str(&format!(",{x:.12e}"));
            }
            out.push_str(&format!(",{norm:.12e}\n"));
        }
        out
    }
}

/// Plain gradient descent `x <- x - lr * grad E(x)`, recording
/// `(x, E(x), grad E(x))` at every step plus the final point. Deterministic
/// given `x0`.
pub fn gradient_descent<F>(
    expr: &DiagramSum,
    x0: &[f64],
    lr: f64,
    steps: usize,
    eval: F,
) -> Result<Trajectory>
where
    F: Fn(&DiagramSum, &Bindings) -> Result<f64>,
{
    if lr <= 0.0 {
        return Err(Error::RangeError(lr));
    }
    if steps == 0 {
        return Err(Error::RangeError(0.0));
    }
    let symbols: Vec<String> = expr.free_symbols().into_iter().collect();
    if symbols.len() != x0.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters for {} symbols",
            x0.len(),
            symbols.len()
        )));
    }
    let grads: Vec<DiagramSum> = symbols
        .iter()
        .map(|s| grad(expr, s))
        .collect::<Result<Vec<_>>>()?;
    let mut x = x0.to_vec();
    let mut trajectory = Trajectory {
        symbols: symbols.clone(),
        steps: Vec::with_capacity(steps + 1),
    };
    for _ in 0..steps {
        let bindings: Bindings = symbols.iter().cloned().zip(x.iter().copied()).collect();
        let energy = eval(expr, &bindings)?;
        let g: Vec<f64> = grads
            .iter()
            .map(|ge| eval(ge, &bindings))
            .collect::<Result<Vec<_>>>()?;
        trajectory.steps.push(DescentStep {
            x: x.clone(),
            energy,
            grad: g.clone(),
        });
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= lr * gi;
        }
    }
    let bindings: Bindings = symbols.iter().cloned().zip(x.iter().copied()).collect();
    let energy = eval(expr, &bindings)?;
    let g: Vec<f64> = grads
        .iter()
        .map(|ge| eval(ge, &bindings))
        .collect::<Result<Vec<_>>>()?;
    trajectory.steps.push(DescentStep {
        x,
        energy,
        grad: g,
    });
    Ok(trajectory)
}

/// The Fig.-5 style variational state: `Create(1,1,1) >> ansatz(3, 4)`.
pub fn three_mode_ansatz_state() -> Diagram {
    gen::create(&[1, 1, 1])
        .then(&gen::ansatz(3, 4))
        .expect("ansatz composes")
}

/// Tensors the Hamiltonian with an identity on one extra mode, letting a
/// variable photon number enter the Hamiltonian register.
pub fn with_spectator_mode(h: &DiagramSum) -> Result<DiagramSum> {
    let id1 = DiagramSum::from_term(Diagram::id(Ty::single(WireKind::Qmode)));
    h.tensor(&id1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_operators_match_sqrt_rules() {
        let adag = creation_op();
        let t = tn::dense_with_boundary_dims(&adag, &[5], &[6]).unwrap();
        for n in 0..5usize {
            let amp = t[[n, n + 1]];
            assert!(
                (amp.re - ((n + 1) as f64).sqrt()).abs() < 1e-12 && amp.im.abs() < 1e-12,
                "a† on |{n}>: {amp}"
            );
        }
        let a = annihilation_op();
        let t = tn::dense_with_boundary_dims(&a, &[5], &[5]).unwrap();
        for n in 1..5usize {
            let amp = t[[n, n - 1]];
            assert!(
                (amp.re - (n as f64).sqrt()).abs() < 1e-12,
                "a on |{n}>: {amp}"
            );
        }
        // a annihilates the vacuum.
        for m in 0..5usize {
            assert!(t[[0, m]].norm() < 1e-12);
        }
    }

    #[test]
    fn number_operator_from_ladders() {
        // a† a = n̂ as one-mode tensors at cutoff 5.
        let composite = annihilation_op().then(&creation_op()).unwrap();
        let t = tn::dense_with_boundary_dims(&composite, &[5], &[5]).unwrap();
        let n_op = tn::dense_with_boundary_dims(&gen::num_op(), &[5], &[5]).unwrap();
        for i in 0..5usize {
            for j in 0..5usize {
                assert!(
                    (t[[i, j]] - n_op[[i, j]]).norm() < 1e-12,
                    "({i},{j}): {} vs {}",
                    t[[i, j]],
                    n_op[[i, j]]
                );
            }
        }
    }

    #[test]
    fn single_site_diagonal_eigenvalue() {
        // H = (U/2) n(n-1) - mu n on one site: eigenvalue on |2> is U - 2 mu.
        let graph = LatticeGraph::path(1);
        let params = BHParams {
            t: 0.7,
            u: 4.0,
            mu: 2.0,
        };
        let h = bose_hubbard(&graph, &params).unwrap();
        let state = gen::create(&[2]);
        let expr = expectation(&state, &h).unwrap();
        let e = eval_scalar_tn(&expr, &Bindings::new()).unwrap();
        assert!((e - (params.u - 2.0 * params.mu)).abs() < 1e-9, "E = {e}");
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let graph = LatticeGraph::path(2);
        let params = BHParams {
            t: 0.1,
            u: 4.0,
            mu: 2.0,
        };
        let h = bose_hubbard(&graph, &params).unwrap();
        // Dense matrix at cutoff 4 equals its conjugate transpose.
        let dims = [4u64, 4];
        let mut total = ndarray::ArrayD::<Complex64>::zeros(ndarray::IxDyn(&[4, 4, 4, 4]));
        for term in h.terms() {
            let t = tn::dense_with_boundary_dims(term, &dims, &dims).unwrap();
            total += &t;
        }
        for a in 0..4usize {
            for b in 0..4usize {
                for c in 0..4usize {
                    for d in 0..4usize {
                        let lhs = total[[a, b, c, d]];
                        let rhs = total[[c, d, a, b]].conj();
                        assert!((lhs - rhs).norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn monomial_layer_diagonal() {
        let layer = monomial_layer(&[1, 2]);
        let t = tn::dense_with_boundary_dims(&layer, &[3, 3], &[3, 3]).unwrap();
        for v0 in 0..3usize {
            for v1 in 0..3usize {
                let expected = (v0 as f64) * (v1 as f64).powi(2);
                let amp = t[[v0, v1, v0, v1]];
                assert!((amp.re - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phase_gradient_of_invariant_expectation_is_zero() {
        // d/dpsi <1| Phase(psi)† n Phase(psi) |1> = 0.
        let psi = crate::diagram::Param::sym("psi");
        let state = gen::create(&[1]).then(&gen::phase(psi)).unwrap();
        let obs = DiagramSum::from_term(gen::num_op());
        let expr = expectation(&state, &obs).unwrap();
        let g = grad(&expr, "psi").unwrap();
        let mut b = Bindings::new();
        b.insert("psi".into(), 0.37);
        let val = eval_scalar_tn(&g, &b).unwrap();
        assert!(val.abs() < 1e-12, "gradient {val}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let graph = LatticeGraph::path(2);
        let params = BHParams {
            t: 0.10,
            u: 4.0,
            mu: 2.0,
        };
        let h = with_spectator_mode(&bose_hubbard(&graph, &params).unwrap()).unwrap();
        let state = gen::create(&[1, 1, 1])
            .then(&gen::ansatz(3, 2))
            .unwrap();
        let expr = expectation(&state, &h).unwrap();
        let symbols: Vec<String> = expr.free_symbols().into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..3 {
            let x: Vec<f64> = symbols.iter().map(|_| rng.gen::<f64>()).collect();
            let bindings: Bindings =
                symbols.iter().cloned().zip(x.iter().copied()).collect();
            for (k, s) in symbols.iter().enumerate() {
                let g = eval_scalar_tn(&grad(&expr, s).unwrap(), &bindings).unwrap();
                let h_step = 1e-5;
                let mut plus = bindings.clone();
                plus.insert(s.clone(), x[k] + h_step);
                let mut minus = bindings.clone();
                minus.insert(s.clone(), x[k] - h_step);
                let fd = (eval_scalar_tn(&expr, &plus).unwrap()
                    - eval_scalar_tn(&expr, &minus).unwrap())
                    / (2.0 * h_step);
                let scale = g.abs().max(fd.abs()).max(1.0);
                assert!(
                    (g - fd).abs() / scale < 1e-5,
                    "trial {trial} {s}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn grad_of_symbol_free_expression_is_zero() {
        let state = gen::create(&[1]);
        let obs = DiagramSum::from_term(gen::num_op());
        let expr = expectation(&state, &obs).unwrap();
        let g = grad(&expr, "nope").unwrap();
        let val = eval_scalar_tn(&g, &Bindings::new()).unwrap();
        assert_eq!(val, 0.0);
    }
}
