//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Iterative factorization failed to reach its tolerance within the sweep
    /// cap. Carries the largest remaining relative off-diagonal residual.
    #[error("factorization did not converge (residual {residual:.3e})")]
    ConvergenceFailure { residual: f64 },

    /// Dimension mismatch or non-finite values handed to an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Gain estimation saw no usable (nonzero) sample point.
    #[error("gain estimation requires at least one point with nonzero norm")]
    EmptyGainSample,

    /// Slack parameter outside the open interval (0, 1).
    #[error("slack epsilon must lie in (0, 1), got {epsilon}")]
    InvalidSlack { epsilon: f64 },

    /// Gain vector rejected at construction time.
    #[error("invalid gain vector: {0}")]
    InvalidGains(String),

    /// A point exceeded the gains the model was built with, so the slack
    /// residual is not positive and the point cannot be lifted.
    #[error("gain violation: slack residual {gamma:.6e} is not positive")]
    GainViolation { gamma: f64, input: Vec<f64> },

    /// Zero (or otherwise degenerate) input where a nonzero point is required.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A lifted point outside the image of the lift whose input block
    /// vanishes; no pre-image direction can be recovered.
    #[error("off-manifold point has zero input block; left inverse undefined")]
    OffManifoldDegenerate,

    /// Latent rescale factor must be positive and finite.
    #[error("invalid latent scale {scale}")]
    InvalidScale { scale: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    TrainingDiverged { epoch: usize },

    /// Contrastive attack direction vanished; no usable search direction.
    #[error("attack direction has zero norm")]
    DegenerateDirection,

    /// Dataset cannot support the requested operation.
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    /// Malformed external file (IDX, checkpoint, model JSON, ...).
    #[error("format error: {0}")]
    FormatError(String),

    /// Run configuration rejected.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable kind tag, used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::EmptyGainSample => "EmptyGainSample",
            Error::InvalidSlack { .. } => "InvalidSlack",
            Error::InvalidGains(_) => "InvalidGains",
            Error::GainViolation { .. } => "GainViolation",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::OffManifoldDegenerate => "OffManifoldDegenerate",
            Error::InvalidScale { .. } => "InvalidScale",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::DegenerateDirection => "DegenerateDirection",
            Error::DegenerateDataset(_) => "DegenerateDataset",
            Error::FormatError(_) => "FormatError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
