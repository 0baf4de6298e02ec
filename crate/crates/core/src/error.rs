use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("J(p) + J_st is singular at {point:?} (smallest singular value {sigma:.3e})")]
    SingularStructure { point: Vec<f64>, sigma: f64 },

    #[error("point {point:?} is outside the structure domain")]
    DomainExit { point: Vec<f64> },

    #[error("finite-difference stencil at {point:?} leaves the domain")]
    StencilOutside { point: Vec<f64> },

    #[error("{{z_n = 0}} is not J-invariant (lower-left block {defect:.3e})")]
    NotComplexHyperplane { defect: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("iteration diverged after {iterations} steps (contraction estimate {ratio:.3})")]
    Divergence { iterations: usize, ratio: f64 },

    #[error("outer solve stagnated after {steps} steps (defect {defect:.3e})")]
    Stagnation { steps: usize, defect: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::Stagnation { .. } => 2,
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
            _ => 1,
        }
    }
}
