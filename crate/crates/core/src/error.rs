use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("coefficient a must be nonzero")]
    ZeroCoefficient,

    #[error("admissibility violated: characteristic root {root} has zero real part")]
    AdmissibilityViolation { root: Complex64 },

    #[error("invalid domain or problem specification: {0}")]
    InvalidSpec(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("resolvent (A + lambda I) is singular at lambda = {lambda}")]
    SingularResolvent { lambda: Complex64 },

    #[error("eigenvalue {eigenvalue} lies on the branch cut (-inf, 0]")]
    BranchCut { eigenvalue: Complex64 },

    #[error("interpolation quadrature did not converge (relative change {relative_change:.3e})")]
    QuadratureNotConverged { relative_change: f64 },

    #[error("boundary block system is numerically singular (relative pivot {relative_pivot:.3e})")]
    SingularBoundarySystem { relative_pivot: f64 },

    #[error("linear system is singular (smallest pivot magnitude {smallest_pivot:.3e})")]
    SingularSystem { smallest_pivot: f64 },

    #[error("fixed-point map is not contracting ({reason}); factors {factors:?}")]
    NotContracting { reason: String, factors: Vec<f64> },

    #[error("maximum number of iterations ({max_iter}) exceeded, last gap {last_gap:.3e}")]
    MaxIterExceeded { max_iter: usize, last_gap: f64 },

    #[error("right-hand side has zero norm")]
    ZeroRhs,

    #[error("time-step system singular at step {step}: {source}")]
    StepSystemSingular {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("condition violated: {condition} at x = {x}")]
    ConditionViolated { condition: String, x: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable class used in CLI exit reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::ZeroCoefficient => "zero-coefficient",
            Error::AdmissibilityViolation { .. } => "admissibility-violation",
            Error::InvalidSpec(_) => "invalid-spec",
            Error::GridTooCoarse(_) => "grid-too-coarse",
            Error::SingularResolvent { .. } => "singular-resolvent",
            Error::BranchCut { .. } => "branch-cut",
            Error::QuadratureNotConverged { .. } => "quadrature-not-converged",
            Error::SingularBoundarySystem { .. } => "singular-boundary-system",
            Error::SingularSystem { .. } => "singular-system",
            Error::NotContracting { .. } => "not-contracting",
            Error::MaxIterExceeded { .. } => "max-iter-exceeded",
            Error::ZeroRhs => "zero-rhs",
            Error::StepSystemSingular { .. } => "step-system-singular",
            Error::ConditionViolated { .. } => "condition-violated",
            Error::Parse { .. } => "parse-error",
            Error::Validation { .. } => "validation-error",
            Error::Io(_) => "io-error",
        }
    }

    /// Process exit code associated with the error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } => 2,
            Error::Io(_) => 3,
            Error::NotContracting { .. } | Error::MaxIterExceeded { .. } => 4,
            _ => 5,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
