//! The two evaluation routes must agree: tensor-network contraction versus
//! permanent-based linear-optical evaluation.

use photonet::channel::Backend;
use photonet::diagram::Param;
use photonet::permanent::PermAlgo;
use photonet::photonic;
use photonet::ChannelDiagram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A seeded random interferometer: `layers` of TBS/Phase pairs on a
/// `modes`-wide register with `photons` photons spread over the inputs.
pub fn random_lo_circuit(seed: u64, max_modes: usize, max_photons: u64, max_depth: usize) -> ChannelDiagram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = rng.gen_range(2..=max_modes);
    let photons = rng.gen_range(1..=max_photons);
    let depth = rng.gen_range(1..=max_depth);
    let mut occs = vec![0u64; modes];
    for _ in 0..photons {
        let m = rng.gen_range(0..modes);
        occs[m] += 1;
    }
    let mut diag = photonic::create(&occs);
    for layer in 0..depth {
        let start = layer % 2;
        let mut pos = start;
        while pos + 1 < modes + start {
            if pos + 1 >= modes {
                break;
            }
            let theta = rng.gen::<f64>();
            let psi = rng.gen::<f64>();
            let mut gate = photonic::id(pos);
            gate = gate.tensor(&photonic::tbs(Param::lit(theta)));
            gate = gate.tensor(&photonic::id(modes - pos - 2));
            diag = diag.then(&gate).unwrap();
            let mut ph = photonic::id(pos);
            ph = ph.tensor(&photonic::phase(Param::lit(psi)));
            ph = ph.tensor(&photonic::id(modes - pos - 1));
            diag = diag.then(&ph).unwrap();
            pos += 2;
        }
    }
    diag.then(&photonic::nr_measurement(modes)).unwrap()
}

#[test]
fn backends_agree_on_seeded_circuits() {
    for seed in 0..20u64 {
        let circuit = random_lo_circuit(seed, 5, 4, 4);
        let tn = circuit.eval().unwrap().prob_dist().unwrap();
        let perm = circuit
            .eval_backend(&Backend::Permanent(PermAlgo::Auto))
            .unwrap()
            .prob_dist()
            .unwrap();
        for (pattern, p_perm) in &perm {
            let p_tn = tn.get(pattern).copied().unwrap_or(0.0);
            assert!(
                (p_tn - p_perm).abs() < 1e-8,
                "seed {seed} pattern {pattern:?}: tn {p_tn} vs permanent {p_perm}"
            );
        }
        for (pattern, p_tn) in &tn {
            if *p_tn > 1e-8 {
                assert!(
                    perm.contains_key(pattern),
                    "seed {seed}: pattern {pattern:?} missing from permanent backend"
                );
            }
        }
    }
}

#[test]
fn hom_through_the_permanent_backend() {
    let hom = photonic::create(&[1, 1])
        .then(&photonic::bs())
        .unwrap()
        .then(&photonic::nr_measurement(2))
        .unwrap();
    let dist = hom
        .eval_backend(&Backend::Permanent(PermAlgo::Auto))
        .unwrap()
        .prob_dist()
        .unwrap();
    assert!(dist[&vec![1, 1]].abs() < 1e-12);
    assert!((dist[&vec![2, 0]] - 0.5).abs() < 1e-12);
    assert!((dist[&vec![0, 2]] - 0.5).abs() < 1e-12);
}

#[test]
fn permanent_backend_rejects_loss() {
    let lossy = photonic::create(&[1])
        .then(&photonic::photon_loss(0.5).unwrap())
        .unwrap()
        .then(&photonic::nr_measurement(1))
        .unwrap();
    let err = lossy.eval_backend(&Backend::Permanent(PermAlgo::Auto));
    assert!(matches!(err, Err(photonet::Error::BackendIneligible(_))));
}

#[test]
fn unitarity_of_extracted_ansatz() {
    use photonet::generators as gen;
    use photonet::permanent::{extract_unitary, unitarity_deviation};
    use std::collections::BTreeMap;

    let mesh = gen::ansatz(4, 3);
    let mut bindings: BTreeMap<String, f64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in mesh.free_symbols() {
        bindings.insert(s, rng.gen::<f64>());
    }
    let numeric = mesh.substitute(&bindings);
    let u = extract_unitary(&numeric).unwrap();
    assert!(unitarity_deviation(&u) < 1e-10);
}

#[test]
fn amplitude_normalization_over_random_unitaries() {
    use ndarray::Array2;
    use num_complex::Complex64;
    use photonet::permanent::{amplitude, Interferometer};

    // Random unitaries from QR-like Gram-Schmidt of Gaussian matrices.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..6 {
        let m = 2 + (trial % 4);
        let mut cols: Vec<Vec<Complex64>> = Vec::new();
        for _ in 0..m {
            let mut v: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            for c in &cols {
                let dot: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
            let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            cols.push(v);
        }
        let u = Array2::from_shape_fn((m, m), |(i, j)| cols[j][i]);
        for n in 1..=4u64 {
            let mut s = vec![0u64; m];
            for k in 0..n {
                s[(k as usize) % m] += 1;
            }
            let intf = Interferometer::new(u.clone(), s.clone()).unwrap();
            let mut total = 0.0;
            for t in photonet::permanent::compositions(n, m) {
                total += amplitude(intf.matrix(), &s, &t, photonet::permanent::PermAlgo::Auto)
                    .unwrap()
                    .norm_sqr();
            }
            assert!(
                (total - 1.0).abs() < 1e-9,
                "m={m} n={n}: total {total}"
            );
        }
    }
}

#[test]
fn amplitude_dagger_symmetry() {
    use ndarray::Array2;
    use num_complex::Complex64;
    use photonet::permanent::amplitude;

    let r = std::f64::consts::FRAC_1_SQRT_2;
    let u = Array2::from_shape_vec(
        (2, 2),
        vec![
            Complex64::new(r, 0.0),
            Complex64::new(0.0, r),
            Complex64::new(0.0, r),
            Complex64::new(r, 0.0),
        ],
    )
    .unwrap();
    let udag = Array2::from_shape_fn((2, 2), |(i, j)| u[(j, i)].conj());
    for s in [[2u64, 0], [1, 1], [0, 2]] {
        for t in [[2u64, 0], [1, 1], [0, 2]] {
            let fwd = amplitude(&u, &s, &t, photonet::permanent::PermAlgo::Auto).unwrap();
            let bwd = amplitude(&udag, &t, &s, photonet::permanent::PermAlgo::Auto).unwrap();
            assert!((fwd - bwd.conj()).norm() < 1e-12);
        }
    }
}
