//! Channel-level qubit vocabulary: ZX generators, basis preparations,
//! measurement, and the stochastic error channels.

use crate::channel::{self, lift_pure, pure_channel, ChannelDiagram};
use crate::diagram::{qubit, Param, Ty, WireKind};
use crate::error::Result;
use crate::generators::{self as gen, Diagram};
use num_complex::Complex64;

pub fn id(n: usize) -> ChannelDiagram {
    ChannelDiagram::id(Ty::repeat(WireKind::Qubit, n))
}

/// Z spider on qubits; phase in turns (`Z(1,1,0.5)` is Pauli-Z).
pub fn z(n_in: usize, n_out: usize, phase: Param) -> ChannelDiagram {
    pure_channel("Z", gen::z(WireKind::Qubit, n_in, n_out, phase))
}

pub fn z0(n_in: usize, n_out: usize) -> ChannelDiagram {
    z(n_in, n_out, Param::lit(0.0))
}

/// X spider on qubits; `X(1,1,0.5)` is Pauli-X.
pub fn x(n_in: usize, n_out: usize, phase: Param) -> ChannelDiagram {
    pure_channel("X", gen::x(WireKind::Qubit, n_in, n_out, phase))
}

pub fn h() -> ChannelDiagram {
    pure_channel("H", gen::hadamard())
}

pub fn scalar(s: Complex64) -> ChannelDiagram {
    channel::scalar(s)
}

/// Computational-basis kets: `Ket(0) = |0>`, one box per bit.
pub fn ket(bits: &[u64]) -> ChannelDiagram {
    let mut d = Diagram::id(Ty::empty());
    for &b in bits {
        let mut prep = gen::x(WireKind::Qubit, 0, 1, Param::lit(0.5 * b as f64));
        prep.push_scalar(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        d = d.tensor(&prep);
    }
    pure_channel("Ket", d)
}

/// The dagger of [`ket`].
pub fn bra(bits: &[u64]) -> ChannelDiagram {
    ket(bits)
        .dagger()
        .expect("basis effects dagger")
}

pub fn cnot() -> ChannelDiagram {
    let z12 = gen::z(WireKind::Qubit, 1, 2, Param::lit(0.0));
    let x21 = gen::x(WireKind::Qubit, 2, 1, Param::lit(0.0));
    let idq = Diagram::id(qubit());
    let mut d = z12.tensor(&idq).then(&idq.tensor(&x21)).unwrap();
    d.push_scalar(Complex64::new(2f64.sqrt(), 0.0));
    lift_pure(&d)
}

pub fn measure(n: usize) -> ChannelDiagram {
    channel::measure(&Ty::repeat(WireKind::Qubit, n)).expect("qubits measure")
}

pub fn encode(n: usize) -> ChannelDiagram {
    channel::encode(&Ty::repeat(WireKind::Bit, n)).expect("bits encode")
}

pub fn discard(n: usize) -> ChannelDiagram {
    channel::discard(&Ty::repeat(WireKind::Qubit, n))
}

/// `(1-p) rho + p X rho X`.
pub fn bit_flip_error(p: f64) -> Result<ChannelDiagram> {
    channel::bit_flip(p)
}

/// `(1-p) rho + p Z rho Z`.
pub fn dephasing_error(p: f64) -> Result<ChannelDiagram> {
    channel::dephasing(p)
}
