use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("registry conflict: {0}")]
    RegistryConflict(String),
    #[error("registry mismatch between operands")]
    RegistryMismatch,
    #[error("unknown port `{0}`")]
    UnknownPort(String),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("photon number {found} exceeds the cap of {cap}")]
    PhotonCapExceeded { found: usize, cap: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix dimension {0} exceeds the permanent cap of {max}", max = crate::optics::MAX_PERMANENT_DIM)]
    PermanentTooLarge(usize),
    #[error("element `{0}` is not unitary and cannot be used mid-circuit")]
    NonUnitaryElement(String),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("input amplitudes are not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("invalid detection pattern: {0}")]
    InvalidPattern(String),
    #[error("state is not a two-qubit coincidence-basis state: {0}")]
    NotTwoQubit(String),
    #[error("overlap matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Scenario(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
