use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpdeError>;

#[derive(Debug, Error)]
pub enum SpdeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A taming parameter set violates the admissibility constraint.
    #[error("taming constraint violated: {product} = {value} is not below threshold {threshold} (max{{alpha*theta, alpha*rho/2}} < 1 + d/(4q(2q-1)) - d/4)")]
    Constraint {
        product: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("singular matrix: non-positive pivot {pivot:e} at row {row}")]
    SingularMatrix { row: usize, pivot: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical blowup at step {step}: sup norm {sup_norm:e}")]
    NumericalBlowup { step: usize, sup_norm: f64 },

    #[error("insufficient accuracy: {0}")]
    Accuracy(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("study aborted at sample {sample} (seed {seed}): {source}")]
    StudyAborted {
        sample: usize,
        seed: u64,
        #[source]
        source: Box<SpdeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SpdeError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SpdeError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True if this error (or the error that aborted a study) is a blowup.
    pub fn is_blowup(&self) -> bool {
        match self {
            SpdeError::NumericalBlowup { .. } => true,
            SpdeError::StudyAborted { source, .. } => source.is_blowup(),
            _ => false,
        }
    }

    /// Errors caused by the user's configuration rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SpdeError::Config { .. }
                | SpdeError::Constraint { .. }
                | SpdeError::InvalidArgument(_)
                | SpdeError::Json(_)
        )
    }
}
