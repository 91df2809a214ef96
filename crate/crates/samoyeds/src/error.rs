//! Error types shared by the format, engine, and MoE layers.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension does not divide as the operation requires.
    #[error("shape not divisible: {0}")]
    Shape(String),

    /// A matrix claimed to conform to the (N,M,V)+2:4 pattern does not.
    #[error("sparse pattern violated: {0}")]
    Pattern(String),

    /// An encoded weight or serialized stream is internally inconsistent.
    #[error("corrupt format: {0}")]
    CorruptFormat(String),

    /// A selection array is unordered, duplicated, or out of range.
    #[error("invalid selection: {0}")]
    Selection(String),

    /// Serialized stream does not start with the expected magic.
    #[error("bad magic: stream is not a serialized weight")]
    BadMagic,

    /// Serialized stream has an unsupported version.
    #[error("version mismatch: found {found}, supported 1")]
    VersionMismatch { found: u16 },

    /// Serialized stream ends before the layout says it should.
    #[error("truncated stream: need {expected} bytes, have {actual}")]
    TruncatedStream { expected: usize, actual: usize },

    /// A tile configuration violates its divisibility constraints.
    #[error("invalid tile config: {0}")]
    TileConfig(String),

    /// A sub-row index is outside [0, m).
    #[error("index out of range: {0}")]
    Index(String),
}
