//! Hybrid qubit/photonic circuit simulation via typed string diagrams.
//!
//! Circuits are built as typed wirings of generator boxes over the four wire
//! types `bit`, `mode`, `qubit`, `qmode`. Pure diagrams compile to tensor
//! networks with an in-house contraction-path optimizer; linear-optical
//! diagrams can alternatively be evaluated through matrix permanents.
//! Classical-quantum channels (noise, measurement, feedback) lower to pure
//! diagrams by doubling.

pub mod channel;
pub mod classical;
pub mod diagram;
pub mod error;
pub mod generators;
pub mod permanent;
pub mod photonic;
pub mod qubits;
pub mod streams;
pub mod tn;
pub mod vqe;

pub use channel::{Channel, ChannelDiagram, EvalResult};
pub use diagram::{bit, mode, qmode, qubit, Bindings, Param, Ty, WireKind, Wiring};
pub use error::{Error, Result};
pub use generators::{Diagram, DiagramSum};
