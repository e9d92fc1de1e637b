//! Channel-level photonic vocabulary: sources, linear-optical gates,
//! dual-rail operators, detectors, fusion measurements, and loss.

use crate::channel::{
    lift_pure, measure, photon_loss as loss_channel, pure_channel, Channel, ChannelDiagram,
    ChannelKind,
};
use crate::diagram::{qmode, Param, Ty, WireKind, Wiring};
use crate::error::Result;
use crate::generators::{self as gen, Diagram, InternalState};
use num_complex::Complex64;

pub fn id(n: usize) -> ChannelDiagram {
    ChannelDiagram::id(Ty::repeat(WireKind::Qmode, n))
}

pub fn create(occupations: &[u64]) -> ChannelDiagram {
    pure_channel("Create", gen::create(occupations))
}

/// `Create` with one internal state per photon (distinguishability model).
pub fn create_with_states(
    occupations: &[u64],
    states: Vec<InternalState>,
) -> Result<ChannelDiagram> {
    Ok(pure_channel(
        "Create",
        gen::create_with_states(occupations, states)?,
    ))
}

pub fn select(occupations: &[u64]) -> ChannelDiagram {
    pure_channel("Select", gen::select(occupations))
}

pub fn bs() -> ChannelDiagram {
    pure_channel("BS", gen::bs())
}

pub fn bbs(bias: Param) -> ChannelDiagram {
    pure_channel("BBS", gen::bbs(bias))
}

pub fn tbs(theta: Param) -> ChannelDiagram {
    pure_channel("TBS", gen::tbs(theta))
}

pub fn phase(psi: Param) -> ChannelDiagram {
    pure_channel("Phase", gen::phase(psi))
}

pub fn hadamard_bs() -> ChannelDiagram {
    pure_channel("HadamardBS", gen::hadamard_bs())
}

pub fn mzi(psi: Param, phi: Param) -> ChannelDiagram {
    lift_pure(&gen::mzi(psi, phi))
}

/// Brick-wall MZI mesh with fresh symbolic parameters.
pub fn ansatz(width: usize, layers: usize) -> ChannelDiagram {
    lift_pure(&gen::ansatz(width, layers))
}

pub fn num_op() -> ChannelDiagram {
    pure_channel("NumOp", gen::num_op())
}

pub fn dual_rail(n: usize) -> ChannelDiagram {
    lift_pure(&gen::dual_rail_n(n))
}

pub fn dual_rail_with_state(state: InternalState) -> ChannelDiagram {
    pure_channel("DualRail", gen::dual_rail_with_state(state))
}

/// Decoder back onto a qubit: the dagger of [`dual_rail`].
pub fn dual_rail_decode() -> ChannelDiagram {
    pure_channel(
        "DualRail†",
        gen::dual_rail().dagger().expect("dual rail daggers"),
    )
}

/// Resolves the photon-count pattern on `n` modes: `qmode^n -> mode^n`.
pub fn nr_measurement(n: usize) -> ChannelDiagram {
    measure(&Ty::repeat(WireKind::Qmode, n)).expect("qmode measures")
}

/// Click/no-click detectors on `n` modes: `qmode^n -> bit^n`, mapping each
/// occupation `m` to `min(m, 1)`.
pub fn threshold_measurement(n: usize) -> ChannelDiagram {
    let nr = nr_measurement(n);
    let mut clamps = ChannelDiagram::id(Ty::empty());
    for _ in 0..n {
        let clamp = gen::classical_fn_from(
            "Threshold",
            crate::diagram::mode(),
            crate::diagram::bit(),
            |v| Some(vec![v[0].min(1)]),
        );
        clamps = clamps.tensor(&pure_channel("Threshold", clamp));
    }
    nr.then(&clamps).expect("threshold composes")
}

pub fn photon_loss(p: f64) -> Result<ChannelDiagram> {
    loss_channel(p)
}

/// Heralded Bell measurement on two dual-rail qubits (rails `0,1` and `2,3`):
/// beamsplitters across the pairs `(0,3)` and `(1,2)`, number-resolving
/// detection of all four modes, and a classical map to (success, parity).
///
/// Click patterns and their heralds:
///   (1,1,0,0), (0,0,1,1)  ->  success, parity 0  (Phi+ projection)
///   (1,0,1,0), (0,1,0,1)  ->  success, parity 1  (Phi- projection)
///   anything else         ->  failure (0, 0)
pub fn fusion_type_ii() -> ChannelDiagram {
    ChannelDiagram::build(Ty::repeat(WireKind::Qmode, 4), |b, h| {
        let hbs = Channel::from_kraus("HadamardBS", gen::hadamard_bs());
        let o03 = b.apply(hbs.clone(), &[h[0], h[3]])?;
        let o12 = b.apply(hbs, &[h[1], h[2]])?;
        let mes = |b: &mut crate::diagram::Builder<Channel>, h| {
            b.apply(
                Channel::from_kraus("Measure", gen::cast(WireKind::Qmode, WireKind::Mode))
                    .with_kind_measure(),
                &[h],
            )
            .map(|v| v[0])
        };
        let m0 = mes(b, o03[0])?;
        let m3 = mes(b, o03[1])?;
        let m1 = mes(b, o12[0])?;
        let m2 = mes(b, o12[1])?;
        let table = gen::classical_fn_from(
            "FusionOutcome",
            Ty::repeat(WireKind::Mode, 4),
            Ty::repeat(WireKind::Bit, 2),
            |v| {
                let (success, parity) = match (v[0], v[1], v[2], v[3]) {
                    (1, 1, 0, 0) | (0, 0, 1, 1) => (1, 0),
                    (1, 0, 1, 0) | (0, 1, 0, 1) => (1, 1),
                    _ => (0, 0),
                };
                Some(vec![success, parity])
            },
        );
        let bits = b.apply(Channel::from_kraus("FusionOutcome", table), &[m0, m1, m2, m3])?;
        Ok(bits)
    })
    .expect("fusion wiring is well-typed")
}

/// Type-I fusion: beamsplitter on the inner rails `(1,2)`, detection of one
/// output, discard of the other; the fused dual-rail qubit lives on the outer
/// rails `(0,3)`. `qmode^4 -> qmode^2 (x) mode`.
pub fn fusion_type_i() -> ChannelDiagram {
    ChannelDiagram::build(Ty::repeat(WireKind::Qmode, 4), |b, h| {
        let hbs = Channel::from_kraus("HadamardBS", gen::hadamard_bs());
        let o12 = b.apply(hbs, &[h[1], h[2]])?;
        let m = b.apply(
            Channel::from_kraus("Measure", gen::cast(WireKind::Qmode, WireKind::Mode))
                .with_kind_measure(),
            &[o12[0]],
        )?;
        let dis = Channel {
            name: "Discard".into(),
            kraus: Diagram::id(qmode()),
            env: qmode(),
            kind: ChannelKind::DiscardWire,
        };
        b.apply(dis, &[o12[1]])?;
        Ok(vec![h[0], h[3], m[0]])
    })
    .expect("fusion wiring is well-typed")
}

/// Dual-rail phase shift: `Phase(psi)` on the second rail, a Z-rotation on
/// the encoded qubit. Convention-dependent.
pub fn phase_shift_dr(psi: Param) -> ChannelDiagram {
    id(1).tensor(&phase(psi))
}

/// Measures which rail carries the photon: bit 1 for the second rail.
/// Convention-dependent.
pub fn z_measurement_dr() -> ChannelDiagram {
    let table = gen::classical_fn_from(
        "RailOutcome",
        Ty::repeat(WireKind::Mode, 2),
        crate::diagram::bit(),
        |v| Some(vec![u64::from(v[1] >= 1 && v[0] == 0)]),
    );
    nr_measurement(2)
        .then(&pure_channel("RailOutcome", table))
        .expect("rail measurement composes")
}

/// X-basis dual-rail measurement: rotate with the fusion beamsplitter, then
/// measure the rail. Convention-dependent.
pub fn x_measurement_dr() -> ChannelDiagram {
    hadamard_bs()
        .then(&z_measurement_dr())
        .expect("composes")
}

pub fn scalar(s: Complex64) -> ChannelDiagram {
    crate::channel::scalar(s)
}

/// Helper: a real-amplitude internal state.
pub fn state(amps: &[f64]) -> Result<InternalState> {
    InternalState::real(amps)
}

/// Helper: swap of `a` and `b` qmodes.
pub fn swap(a: usize, b: usize) -> ChannelDiagram {
    Wiring::swap(Ty::repeat(WireKind::Qmode, a), Ty::repeat(WireKind::Qmode, b))
}
