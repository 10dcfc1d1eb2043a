use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum NqsError {
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("graph contains a directed cycle through nodes {cycle:?}")]
    Acyclicity { cycle: Vec<usize> },
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("amplitude overflow at configuration bits={config:#x}")]
    AmplitudeOverflow { config: u64 },
    #[error("consistency: {0}")]
    Consistency(String),
    #[error("degree: {0}")]
    Degree(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("experiment: {0}")]
    Experiment(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl NqsError {
    /// Stable machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            NqsError::Capacity(_) => "capacity",
            NqsError::Contract(_) => "contract",
            NqsError::Dimension { .. } => "dimension",
            NqsError::Acyclicity { .. } => "acyclicity",
            NqsError::Numeric(_) => "numeric",
            NqsError::Domain(_) => "domain",
            NqsError::DegenerateState(_) => "degenerate_state",
            NqsError::AmplitudeOverflow { .. } => "amplitude_overflow",
            NqsError::Consistency(_) => "consistency",
            NqsError::Degree(_) => "degree",
            NqsError::Spec(_) => "spec",
            NqsError::Experiment(_) => "experiment",
            NqsError::Io(_) => "io",
            NqsError::Json(_) => "json",
        }
    }
}

pub type NqsResult<T> = Result<T, NqsError>;
