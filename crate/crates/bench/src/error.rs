use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot read config {}: {source}", path.display())]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("nothing to emit")]
    EmptyOutput,

    #[error(transparent)]
    Core(#[from] tkpen_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Mistakes in what the user asked for, as opposed to failures while
    /// doing it.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config(_) | Self::ConfigRead { .. })
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
