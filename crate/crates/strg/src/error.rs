//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix shapes. Carries both shapes for diagnostics.
    #[error("dimension mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Dimension {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// Input violates a mathematical precondition (negative NMF target,
    /// rank too large, scene smaller than the kernel, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller misuse: missing inputs, empty bands, unknown names.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value was admitted or produced where finiteness is required.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file contents.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn dimension(
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    ) -> Self {
        Error::Dimension {
            op,
            lhs_rows: lhs.0,
            lhs_cols: lhs.1,
            rhs_rows: rhs.0,
            rhs_cols: rhs.1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
