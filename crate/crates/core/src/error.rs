use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped so that callers (notably the CLI) can map them onto
/// "bad input" versus "numerical failure" exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("outside the domain of definition: {0}")]
    Domain(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("cross-section is not normalized: {0}")]
    NotNormalized(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("minimization did not converge after {iterations} iterations: {reason} (gradient norm {gradient_norm:e}, energy {energy:e})")]
    Convergence {
        iterations: usize,
        reason: String,
        gradient_norm: f64,
        energy: f64,
    },

    #[error("insufficient data: need at least {needed} successful rungs, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// `true` for failures caused by the numerics rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::Convergence { .. } | Error::Domain(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
