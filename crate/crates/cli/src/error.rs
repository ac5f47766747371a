use thiserror::Error;

/// Everything that ends a run with exit status 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("config is missing the [{0}] section")]
    Missing(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] qsvm_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
