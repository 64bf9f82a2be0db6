use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("malformed result bundle: {0}")]
    Bundle(String),

    #[error(transparent)]
    Core(#[from] staticnoise::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct Report<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    /// 2 for numerical failures, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::GridMismatch(_) => "grid_mismatch",
            CliError::Bundle(_) => "bundle",
            CliError::Core(staticnoise::Error::InvalidParameter { .. }) => "invalid_parameter",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "invariant",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    /// Single-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let report = Report { kind: self.kind(), message: self.to_string(), exit_code: self.exit_code() };
        serde_json::json!({ "error": report }).to_string()
    }
}
