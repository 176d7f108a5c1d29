//! Crate-wide error type.
//!
//! Hot-path shape bugs (e.g. feeding a conv layer a buffer of the wrong
//! length) are programmer errors and panic via `assert!`; everything a
//! caller can plausibly trigger with bad inputs or bad files comes back
//! as an [`Error`].

use crate::frame::Scheme;

/// Errors surfaced by the workbench APIs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A modulator was handed fewer bits than one frame needs.
    #[error("insufficient bits for {scheme}: need at least {needed}, got {got}")]
    InsufficientBits {
        scheme: Scheme,
        needed: usize,
        got: usize,
    },

    /// A bit count that does not divide into whole symbols.
    #[error("bit count {got} is not a multiple of {bits_per_symbol} ({scheme} bits/symbol)")]
    RaggedBits {
        scheme: Scheme,
        bits_per_symbol: usize,
        got: usize,
    },

    /// Asked for the point constellation of a frequency-shift scheme.
    #[error("{0} is not a linear scheme and has no point constellation")]
    NoConstellation(Scheme),

    /// A configuration value outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// A stratified split was asked of an empty or too-small cell.
    #[error("split failed: {0}")]
    SplitFailed(String),

    /// A bundle was evaluated against a dataset it was not trained on.
    #[error("dataset fingerprint mismatch: bundle says {expected}, dataset is {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    /// A malformed or truncated on-disk artifact.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// An artifact whose stored hash no longer matches its content.
    #[error("integrity failure in {path}: stored fingerprint {stored} != recomputed {actual}")]
    Integrity {
        path: String,
        stored: String,
        actual: String,
    },

    /// An artifact written by an incompatible format version.
    #[error("unsupported {kind} format version {major}.{minor} (reader supports major {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        major: u16,
        minor: u16,
        supported: u16,
    },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Header or report JSON that fails to parse.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
