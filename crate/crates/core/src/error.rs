use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// The variants are grouped so the CLI can map them onto exit codes:
/// usage problems, data problems and numeric/degenerate situations.
#[derive(Debug, Error)]
pub enum GadgetError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing value at row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },

    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("coverage gap: external predictor has no archived prediction for {0}")]
    CoverageGap(String),

    #[error("external predictor cannot be refit")]
    NotTrainable,

    #[error("schema mismatch: expected {expected} columns, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GadgetError {
    /// Process exit code used by the CLI: 2 usage, 3 data, 4 numeric/degenerate.
    pub fn exit_code(&self) -> i32 {
        match self {
            GadgetError::Usage(_) | GadgetError::NotTrainable => 2,
            GadgetError::Data(_)
            | GadgetError::MissingValue { .. }
            | GadgetError::SchemaMismatch { .. }
            | GadgetError::CoverageGap(_)
            | GadgetError::Io(_)
            | GadgetError::Csv(_)
            | GadgetError::Json(_) => 3,
            GadgetError::DegenerateFeature(_)
            | GadgetError::DegenerateModel(_)
            | GadgetError::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, GadgetError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(GadgetError::Usage("x".into()).exit_code(), 2);
        assert_eq!(GadgetError::NotTrainable.exit_code(), 2);
        assert_eq!(GadgetError::SchemaMismatch { expected: 3, got: 2 }.exit_code(), 3);
        assert_eq!(GadgetError::Io(std::io::Error::other("x")).exit_code(), 3);
        assert_eq!(GadgetError::DegenerateModel("x".into()).exit_code(), 4);
    }
}
