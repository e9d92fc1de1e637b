//! Channel-level classical vocabulary: Boolean logic, natural-number
//! arithmetic, post-selection, and classically controlled quantum gates.

use crate::channel::{pure_channel, ChannelDiagram};
use crate::diagram::{Param, Ty, WireKind};
use crate::error::Result;
use crate::generators::{self as gen, Diagram};

pub fn id_bit(n: usize) -> ChannelDiagram {
    ChannelDiagram::id(Ty::repeat(WireKind::Bit, n))
}

pub fn id_mode(n: usize) -> ChannelDiagram {
    ChannelDiagram::id(Ty::repeat(WireKind::Mode, n))
}

/// Classical Z spider (copy/compare in the value basis).
pub fn z(n_in: usize, n_out: usize, phase: Param) -> ChannelDiagram {
    pure_channel("Z", gen::z(WireKind::Bit, n_in, n_out, phase))
}

/// Classical X spider; `X(1,1,0.5)` is the NOT gate as a spider.
pub fn x(n_in: usize, n_out: usize, phase: Param) -> ChannelDiagram {
    pure_channel("X", gen::x(WireKind::Bit, n_in, n_out, phase))
}

/// Copies a bit to `n` outputs.
pub fn copy_bit(n: usize) -> ChannelDiagram {
    z(1, n, Param::lit(0.0))
}

/// Copies a mode value to `n` outputs.
pub fn copy_mode(n: usize) -> ChannelDiagram {
    pure_channel("Copy", gen::fock_spider(WireKind::Mode, 1, n))
}

pub fn not_gate() -> ChannelDiagram {
    pure_channel("Not", gen::not_gate())
}

pub fn xor() -> ChannelDiagram {
    pure_channel("Xor", gen::xor())
}

pub fn and() -> ChannelDiagram {
    pure_channel("And", gen::and())
}

pub fn or() -> ChannelDiagram {
    pure_channel("Or", gen::or())
}

/// Sums `k` mode values.
pub fn add(k: usize) -> ChannelDiagram {
    pure_channel("Add", gen::add(k))
}

pub fn sub() -> ChannelDiagram {
    pure_channel("Sub", gen::sub())
}

pub fn multiply() -> ChannelDiagram {
    pure_channel("Multiply", gen::multiply())
}

pub fn divide() -> ChannelDiagram {
    pure_channel("Divide", gen::divide())
}

pub fn mod2() -> ChannelDiagram {
    pure_channel("Mod2", gen::mod2())
}

/// Keeps only runs where the bit equals `value`; sub-normalizing.
pub fn postselect_bit(value: u64) -> ChannelDiagram {
    pure_channel("PostselectBit", gen::postselect_bit(value))
}

/// GF(2) linear map given by an `m x n` 0/1 matrix.
pub fn binary_matrix(rows: Vec<Vec<u8>>) -> Result<ChannelDiagram> {
    Ok(pure_channel("BinaryMatrix", gen::binary_matrix(rows)?))
}

/// Classical function from an explicit input-to-output table over capped
/// mode values; the table must cover every input below the caps.
pub fn classical_function(
    name: &str,
    in_caps: Vec<u64>,
    cod: Ty,
    table: std::collections::BTreeMap<Vec<u64>, Vec<u64>>,
) -> Result<ChannelDiagram> {
    Ok(pure_channel(
        name,
        gen::classical_function(name, in_caps, cod, table)?,
    ))
}

/// Applies the pure `body` when the control bit is 1, identity when 0; the
/// bit is consumed.
pub fn bit_controlled_gate(body: Diagram) -> Result<ChannelDiagram> {
    Ok(pure_channel("BitControlledGate", gen::bit_controlled(body)?))
}

pub fn bit_controlled_phase_shift(psi: Param) -> ChannelDiagram {
    pure_channel("BitControlledPhaseShift", gen::bit_controlled_phase_shift(psi))
}

/// Pauli-X on a qubit controlled by a bit.
pub fn ctrl_x() -> ChannelDiagram {
    pure_channel("CtrlX", gen::ctrl_x())
}

/// Pauli-Z on a qubit controlled by a bit.
pub fn ctrl_z() -> ChannelDiagram {
    pure_channel("CtrlZ", gen::ctrl_z())
}

/// Deletes a classical wire.
pub fn discard_bit() -> ChannelDiagram {
    crate::channel::discard(&Ty::single(WireKind::Bit))
}

pub fn discard_mode() -> ChannelDiagram {
    crate::channel::discard(&Ty::single(WireKind::Mode))
}
