use crate::network::BusId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("branch {branch} references unknown bus {bus}")]
    DanglingBranch { branch: usize, bus: BusId },

    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),

    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),

    #[error("network is not connected; unreachable buses: {unreachable:?}")]
    Disconnected { unreachable: Vec<BusId> },

    #[error("invalid bus {bus}: {reason}")]
    InvalidBus { bus: BusId, reason: String },

    #[error("invalid branch {branch} ({from}-{to}): {reason}")]
    InvalidBranch {
        branch: usize,
        from: BusId,
        to: BusId,
        reason: String,
    },

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("unknown bus {0}")]
    UnknownBus(BusId),

    #[error("infeasible measurement allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("invalid measurement data: {0}")]
    InvalidMeasurement(String),

    #[error("power factor undefined at bus {bus}: current magnitude {current:e} below threshold")]
    UndefinedPowerFactor { bus: BusId, current: f64 },

    #[error("error propagation through a product needs non-zero factors (factor {index} is zero)")]
    ZeroFactor { index: usize },

    #[error("singular power-flow Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("power flow did not converge ({iterations} iterations, max mismatch {max_mismatch:e})")]
    NotConverged { iterations: usize, max_mismatch: f64 },

    #[error("KKT system is singular (unobservable or redundant constraints): {diagnostic}")]
    SingularKkt { diagnostic: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularJacobian { .. } | Error::NotConverged { .. } | Error::SingularKkt { .. } => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}
