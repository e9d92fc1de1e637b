//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("type mismatch at factor {index}: expected {expected}, found {found}")]
    TypeMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("dagger is not defined for box `{0}`")]
    DaggerUndefined(String),

    #[error("sum of zero diagrams")]
    EmptySum,

    #[error("unknown symbol `{0}` in substitution")]
    UnknownSymbol(String),

    #[error("wire used more than once in builder callback")]
    WireReuse,

    #[error("wire neither consumed nor returned by builder callback")]
    WireDropped,

    #[error("internal state is not normalised (norm deviates by {0:.3e})")]
    NormError(f64),

    #[error("classical function table misses input {0:?}")]
    TableIncomplete(Vec<u64>),

    #[error("parameter {0} outside valid range")]
    RangeError(f64),

    #[error("internal-state dimensions disagree: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("photon source lacks an internal state while inflating to dimension {0}")]
    MissingInternalState(usize),

    #[error("inflation does not support box `{0}` on qmode wires")]
    InflationUnsupported(String),

    #[error("diagram still contains free symbols: {0:?}")]
    SymbolicDiagram(Vec<String>),

    #[error("backend cannot evaluate this diagram: offending box `{0}`")]
    BackendIneligible(String),

    #[error("generator emitted an out-of-cap transition (wire dim {dim}, value {value})")]
    CapOverflow { dim: u64, value: u64 },

    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not a valid quantum state: {0}")]
    NotAState(String),

    #[error("photon numbers differ between input ({0}) and outcome ({1})")]
    PhotonNumberMismatch(u64, u64),

    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),

    #[error("too many outcome patterns to enumerate ({0})")]
    TooManyOutcomes(u128),

    #[error("network too large for exact planning ({0} nodes, bound {1})")]
    TooLarge(usize, usize),

    #[error("gradient rule not available for box `{0}`")]
    GradUnsupported(String),

    #[error("amplitudes are only available for pure diagrams (offending box `{0}`)")]
    NotPure(String),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),
}

pub type Result<T> = std::result::Result<T, Error>;
