use thiserror::Error;

use crate::linear_solver::PrimalModel;
use crate::nonlinear_solver::NewtonTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Final iterate of a Newton run that hit its iteration budget.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub model: PrimalModel,
    pub trace: NewtonTrace,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("derivative order {order} is not supported (max {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid landmark count {m} for a grid of {n} points")]
    InvalidCount { m: usize, n: usize },

    #[error("landmarks {a} and {b} coincide")]
    DegenerateLandmarks { a: f64, b: f64 },

    #[error("linear system is singular or numerically singular (pivot ratio {ratio:.3e})")]
    SingularSystem { ratio: f64 },

    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },

    #[error("rhs partial derivatives are required but missing")]
    PartialsMissing,

    #[error("Newton iteration did not reach tolerance within {} iterations", .0.trace.iterations())]
    MaxItersExceeded(Box<NewtonFailure>),

    #[error("Newton iteration diverged (residual {residual:.3e} at iteration {iteration})")]
    Divergence { iteration: usize, residual: f64 },

    #[error("trace too short for a convergence-rate fit: {reason}")]
    InsufficientTrace { reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("reference is constant; R^2 is undefined")]
    ConstantReference,

    #[error("runs are not comparable: {reason}")]
    IncompatibleRuns { reason: String },

    #[error("point {t} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("memory guard exceeded: n = {n} > {limit}")]
    MemoryGuard { n: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("result carries no model parameters")]
    MissingModel,

    #[error("unknown problem id {0} (expected 1..=16)")]
    UnknownProblem(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable, kebab-case error class used by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder { .. } => "unsupported-order",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::InvalidCount { .. } => "invalid-count",
            Error::DegenerateLandmarks { .. } => "degenerate-landmarks",
            Error::SingularSystem { .. } => "singular-system",
            Error::NonFinite { .. } => "non-finite",
            Error::PartialsMissing => "partials-missing",
            Error::MaxItersExceeded(_) => "max-iters-exceeded",
            Error::Divergence { .. } => "divergence",
            Error::InsufficientTrace { .. } => "insufficient-trace",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::ConstantReference => "constant-reference",
            Error::IncompatibleRuns { .. } => "incompatible-runs",
            Error::OutOfDomain { .. } => "out-of-domain",
            Error::MemoryGuard { .. } => "memory-guard",
            Error::InvalidConfig(_) => "invalid-config",
            Error::MissingModel => "missing-model",
            Error::UnknownProblem(_) => "unknown-problem",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
