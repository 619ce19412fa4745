//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A required input column is absent (e.g. in a tracks CSV header).
    #[error("missing column: {0}")]
    MissingColumn(String),

    /// A cell or line failed to parse; `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A configuration key that no module defines.
    #[error("unknown config key at line {line}: {key}")]
    UnknownKey { key: String, line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough history or future frames, or a sequence too short to evaluate.
    #[error("out of range: {0}")]
    Range(String),

    /// Tensor dimensions incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A binary file does not start with the expected magic bytes.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    /// A binary file carries an unsupported format version.
    #[error("bad version: expected {expected}, found {found}")]
    BadVersion { expected: u32, found: u32 },

    /// A binary file ended before its declared payload.
    #[error("truncated file")]
    Truncated,

    /// A subpixel window contained zero total probability mass.
    #[error("degenerate window: total probability mass is zero")]
    DegenerateMass,

    #[error("empty dataset")]
    EmptyDataset,
}
