use serde_json::json;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gwda_core::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data and sampling lengthscales are both {lengthscale:?}; set allow_inverse_crime to override")]
    InverseCrime { lengthscale: [f64; 2] },

    #[error("artifacts missing or modified: {}", missing.join(", "))]
    ManifestIncomplete { missing: Vec<String> },

    #[error("every chain failed: {}", .0.join("; "))]
    AllChainsFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "invalid-config",
            CliError::InverseCrime { .. } => "inverse-crime",
            CliError::ManifestIncomplete { .. } => "manifest-incomplete",
            CliError::AllChainsFailed(_) => "chains-failed",
            CliError::Io(_) => "io-error",
            CliError::Json(_) => "json-error",
            CliError::Csv(_) => "csv-error",
        }
    }

    /// `{"error": kind, "message": text}` plus the missing paths when known.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::ManifestIncomplete { missing } = self {
            v["missing"] = json!(missing);
        }
        v.to_string()
    }
}
