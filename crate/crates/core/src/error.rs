use thiserror::Error;

/// Errors produced by the energy model, discretization, solver and audits.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A step tensor (or any SPD argument) is singular or indefinite.
    #[error("singular step tensor (lambda_min = {lambda_min:e})")]
    Singular { lambda_min: f64 },

    /// An order tensor left the admissible eigenvalue range.
    #[error("order tensor outside the admissible set (lambda_min = {lambda_min})")]
    InfeasibleOrder { lambda_min: f64 },

    #[error("orientation violated (det = {det:e})")]
    Orientation { det: f64 },

    /// A discrete state violates `det grad phi >= delta0` or the nodal order-tensor bound.
    #[error("infeasible state at {location}: {detail}")]
    Infeasible { location: String, detail: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown convexity density `{0}`")]
    UnknownDensity(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for the errors that mean "the state is not admissible".
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::InfeasibleOrder { .. }
                | Error::Singular { .. }
                | Error::Orientation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
