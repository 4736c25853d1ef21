use thiserror::Error;

/// A single violated invariant together with how far off it was.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (off by {:.3e})", self.invariant, self.magnitude)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NonSquare {
        rows: usize,
        row: usize,
        cols: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension must be at least {min}, got {found}")]
    DimensionTooSmall { min: usize, found: usize },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("not a density matrix: {}", join(.0))]
    InvalidDensity(Vec<Violation>),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("Hermitian eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("outcome {mu} is impossible in this state (probability {probability:.3e})")]
    OutcomeImpossible { mu: usize, probability: f64 },

    #[error("matrix is not in the connectivity cone: {}", join(.0))]
    NotInCone(Vec<Violation>),

    #[error("cone projection did not converge after {cycles} iterations{}", join(.violations))]
    ProjectionNoConvergence {
        cycles: usize,
        violations: Vec<Violation>,
    },

    #[error("synthesis solver did not converge after {iterations} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})")]
    NoFeasiblePoint {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("invalid synthesis problem: {0}")]
    InvalidProblem(String),

    #[error("lambda sign condition fails on R*sigma = {lambda_tilde:?}; adjust gamma1/gamma2/alpha and solve again")]
    InfeasibleLambda { lambda_tilde: Vec<f64> },

    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),

    #[error("state left the density-matrix set at step {step}: {}", join(.violations))]
    StateInvariant {
        step: usize,
        violations: Vec<Violation>,
    },

    #[error("filter estimate assigns probability {probability:.3e} to observed outcome {mu} at step {step}")]
    FilterBreakdown {
        step: usize,
        mu: usize,
        probability: f64,
    },

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
