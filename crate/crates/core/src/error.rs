use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("K = {k} is out of range (only {available} penalized coordinates)")]
    KOutOfRange { k: usize, available: usize },

    #[error("active set has more than {cap} sign patterns")]
    ActiveSetOverflow { cap: usize },

    #[error("line search gave up after {0} step-size increases")]
    LineSearch(usize),

    #[error("non-finite objective at iteration {0}")]
    Divergence(usize),

    #[error("{0}")]
    Unsupported(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("instance already has an intercept column")]
    InterceptPresent,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::InvalidData(format!(
            "{what}[{i}] is not finite ({})",
            values[i]
        ))),
    }
}
