//! Fusion-based teleportation and fusion-mediated entanglement generation.

use num_complex::Complex64;
use photonet::channel::{discard, fidelity, inflate, ChannelDiagram};
use photonet::classical;
use photonet::diagram::Param;
use photonet::generators::{self as gen, InternalState};
use photonet::photonic;
use photonet::qubits;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The dual-rail correction controlled on the fusion parity bit.
fn correction() -> ChannelDiagram {
    let body = gen::hadamard_bs()
        .then(
            &gen::phase(Param::lit(0.5)).tensor(&photonet::Diagram::id(photonet::qmode())),
        )
        .unwrap()
        .then(&gen::hadamard_bs())
        .unwrap();
    classical::bit_controlled_gate(body).unwrap()
}

fn fusion_teleportation() -> ChannelDiagram {
    let channel_bell = qubits::z0(0, 2)
        .tensor(&qubits::scalar(c(0.5f64.sqrt(), 0.0)))
        .then(&photonic::dual_rail(2))
        .unwrap();
    photonic::dual_rail(1)
        .tensor(&channel_bell)
        .then(&photonic::fusion_type_ii().tensor(&photonic::id(2)))
        .unwrap()
        .then(&classical::postselect_bit(1).tensor(&correction()))
        .unwrap()
        .then(&photonic::dual_rail_decode())
        .unwrap()
}

#[test]
fn fusion_teleportation_is_identity_times_half() {
    let teleport = fusion_teleportation().eval().unwrap();
    let reference = qubits::id(1)
        .tensor(&qubits::scalar(c(0.5f64.sqrt(), 0.0)))
        .eval()
        .unwrap();
    assert_eq!(teleport.tensor.shape(), reference.tensor.shape());
    let dev = teleport
        .tensor
        .iter()
        .zip(reference.tensor.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    assert!(dev < 1e-9, "max deviation {dev}");
}

#[test]
fn fusion_success_probability_on_plus_states_is_half() {
    // Two dual-rail |+> photons into the fusion: success bit 1 with p = 1/2.
    let plus = {
        let mut d = gen::z(photonet::WireKind::Qubit, 0, 1, Param::lit(0.0));
        d.push_scalar(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        photonet::channel::pure_channel("Ket+", d)
    };
    let diag = plus
        .tensor(&plus)
        .then(&photonic::dual_rail(2))
        .unwrap()
        .then(&photonic::fusion_type_ii())
        .unwrap()
        .then(&classical::id_bit(1).tensor(&classical::discard_bit()))
        .unwrap();
    let dist = diag.eval().unwrap().prob_dist().unwrap();
    assert!((dist[&vec![1]] - 0.5).abs() < 1e-9, "{:?}", dist);
}

#[test]
fn fusion_on_vacuum_clicks_nothing() {
    let diag = photonic::create(&[0, 0, 0, 0])
        .then(&photonic::fusion_type_ii())
        .unwrap();
    let dist = diag.eval().unwrap().prob_dist().unwrap();
    assert!((dist[&vec![0, 0]] - 1.0).abs() < 1e-12);
}

/// One point of the Appendix-D sweep: fidelity and success probability of
/// the fused pair for internal states `s1`, `s2`.
fn sweep_point(s1: &InternalState, s2: &InternalState) -> (f64, f64) {
    let bell = qubits::z0(0, 2).tensor(&qubits::scalar(c(0.5f64.sqrt(), 0.0)));
    let enc = photonic::dual_rail_with_state(s1.clone())
        .tensor(&photonic::dual_rail_with_state(s2.clone()));
    let middle = enc
        .then(&photonic::fusion_type_ii())
        .unwrap()
        .then(&classical::postselect_bit(1).tensor(&classical::postselect_bit(0)))
        .unwrap();
    let experiment = bell
        .tensor(&bell)
        .then(&qubits::id(1).tensor(&middle).tensor(&qubits::id(1)))
        .unwrap();
    let inflated = inflate(&experiment, s1.dim()).unwrap();
    let rho_tilde = inflated.eval().unwrap();
    let rho = rho_tilde.density_matrix().unwrap();
    let p_succ = (0..4).map(|i| rho[(i, i)].re).sum::<f64>();
    let bell_vec: Vec<Complex64> = vec![
        c(0.5f64.sqrt(), 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(0.5f64.sqrt(), 0.0),
    ];
    let normalized = rho.mapv(|v| v / p_succ);
    let f = fidelity(&normalized, &bell_vec).unwrap();
    (f, p_succ)
}

#[test]
fn fidelity_sweep_endpoint_and_monotonicity() {
    let s1 = InternalState::real(&[1.0, 0.0]).unwrap();
    let n = 30;
    let mut fs = Vec::new();
    for i in 0..n {
        let theta = (n - 1 - i) as f64 * (std::f64::consts::FRAC_PI_2) / (n - 1) as f64;
        let s2 = InternalState::real(&[theta.cos(), theta.sin()]).unwrap();
        let (f, p) = sweep_point(&s1, &s2);
        assert!(p > 0.0 && p <= 1.0 + 1e-9, "p_succ = {p}");
        fs.push(f);
    }
    // x runs from 0 (orthogonal) to 1 (indistinguishable).
    let last = *fs.last().unwrap();
    assert!((last - 1.0).abs() < 1e-6, "F(x=1) = {last}");
    for w in fs.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "fidelity not monotone: {:?}", fs);
    }
}

#[test]
fn experiment_ratio_route_matches_density_route() {
    // Appendix-D numerator/denominator evaluation through scalars.
    let s1 = InternalState::real(&[1.0, 0.0]).unwrap();
    let s2 = InternalState::real(&[0.6, 0.8]).unwrap();
    let bell = qubits::z0(0, 2).tensor(&qubits::scalar(c(0.5f64.sqrt(), 0.0)));
    let enc = photonic::dual_rail_with_state(s1.clone())
        .tensor(&photonic::dual_rail_with_state(s2.clone()));
    let middle = enc
        .then(&photonic::fusion_type_ii())
        .unwrap()
        .then(&classical::postselect_bit(1).tensor(&classical::postselect_bit(0)))
        .unwrap();
    let experiment = bell
        .tensor(&bell)
        .then(&qubits::id(1).tensor(&middle).tensor(&qubits::id(1)))
        .unwrap();
    let num_diag = experiment
        .then(&bell.dagger().unwrap())
        .unwrap();
    let den_diag = experiment
        .then(&discard(&photonet::Ty::repeat(photonet::WireKind::Qubit, 2)))
        .unwrap();
    let num = inflate(&num_diag, 2).unwrap().eval().unwrap().scalar().unwrap();
    let den = inflate(&den_diag, 2).unwrap().eval().unwrap().scalar().unwrap();
    let f_ratio = num.re / den.re;

    let (f_rho, _) = sweep_point(&s1, &s2);
    assert!(
        (f_ratio - f_rho).abs() < 1e-9,
        "ratio {f_ratio} vs density {f_rho}"
    );
}
