use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid circuit parameters: {0}")]
    InvalidCircuit(String),
    #[error("beta_L = {0} <= 1: potential has no double well")]
    NoDoubleWell(f64),
    #[error("flux fraction {0} >= 1: shallow well does not exist")]
    NoShallowWell(f64),
    #[error("invalid phase grid: {0}")]
    InvalidGrid(String),
    #[error("grid too coarse: doubling the resolution shifted level {level} by relative {shift:.3e}")]
    GridTooCoarse { level: usize, shift: f64 },
    #[error("only {found} shallow-well levels found, need at least 3")]
    InsufficientShallowLevels { found: usize },
    #[error("invalid pulse parameters: {0}")]
    InvalidPulse(String),
    #[error("pulse area equation has no positive-amplitude solution")]
    DegenerateArea,
    #[error("anharmonicity is zero: DRAG corrections undefined")]
    ZeroAnharmonicity,
    #[error("time {t} outside gate window [0, {gate_time}]")]
    OutOfWindow { t: f64, gate_time: f64 },
    #[error("invalid bath parameters: {0}")]
    InvalidBath(String),
    #[error("negative frequency {0} passed to spectral density")]
    NegativeFrequency(f64),
    #[error("non-positive frequency {0} passed to Planck function")]
    NonPositiveFrequency(f64),
    #[error("adaptive quadrature did not reach tolerance (estimate {estimate:.3e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("kernel table step {dt} exceeds limit {limit}")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("time {t} beyond kernel table range {t_max} and tables not converged")]
    TableRangeExceeded { t: f64, t_max: f64 },
    #[error("kernel tables have not reached their Markov plateau (relative change {change:.3e})")]
    TablesNotConverged { change: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("invalid simulation config: {0}")]
    InvalidSimulation(String),
    #[error("integrator instability at t = {t}: {reason}")]
    StepInstability { t: f64, reason: String },
    #[error("calibrated coupling misses the target T1 by relative {relative:.3e}")]
    CalibrationMismatch { relative: f64 },
    #[error("trajectories belong to different runs")]
    MismatchedRuns,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Configuration problems as opposed to numerical failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::InvalidCircuit(_)
                | Error::InvalidGrid(_)
                | Error::InvalidPulse(_)
                | Error::InvalidBath(_)
                | Error::InvalidSimulation(_)
                | Error::NoDoubleWell(_)
                | Error::NoShallowWell(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
