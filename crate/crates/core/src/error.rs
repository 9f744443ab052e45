use thiserror::Error;

/// Errors raised across the lab. Validation failures carry enough context to
/// point a user at the offending field.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error("preferred and dispreferred actions must differ (action {0})")]
    IdenticalActions(usize),

    #[error("outcome already attached to this record")]
    OutcomeAlreadySet,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config schema violation at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema {
        path: String,
        line: Option<usize>,
        message: String,
    },

    #[error("empty population")]
    EmptyPopulation,

    #[error("no preference pair carries positive reward weight")]
    AllZeroWeights,

    #[error("objective became non-finite during optimization")]
    NonFiniteObjective,

    #[error("override signals requested for an ACCEPT decision")]
    SignalsOnAccept,

    #[error("too few held-out pairs: {got} < {min}")]
    TooFewHeldout { got: usize, min: usize },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for failures caused by user-supplied input (exit status 2 in the CLI).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::Config(_)
                | LabError::Schema { .. }
                | LabError::Unknown { .. }
                | LabError::Dataset(_)
                | LabError::DimensionMismatch { .. }
                | LabError::OutOfRange { .. }
                | LabError::EmptyPopulation
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
