//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("corpus record at line {line}: {msg}")]
    CorpusRecord { line: usize, msg: String },

    #[error("document {doc_id} has no image assignment annotation")]
    MissingAssignment { doc_id: String },

    #[error("document {doc_id} has no image position data for closest-preceding assignment")]
    MissingImagePositions { doc_id: String },

    #[error("image assignment on document {doc_id}: {msg}")]
    ImageAssignment { doc_id: String, msg: String },

    #[error("image {image_id} has no loaded pixel data (path {path})")]
    ImageNotLoaded { image_id: String, path: PathBuf },

    #[error("font parse error at line {line}: {msg}")]
    FontParse { line: usize, msg: String },

    #[error("render error: {0}")]
    Render(String),

    #[error("invalid layout config: {0}")]
    Layout(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("cannot pad empty text")]
    EmptyPadInput,

    #[error("document has {found} snippets, need at least {required} to sample a pair")]
    DocumentTooShort { required: usize, found: usize },

    #[error("corpus has {available} usable documents, batch needs {required}")]
    InsufficientCorpus { required: usize, available: usize },

    #[error("benchmark needs {required} qualifying documents, corpus has {available}")]
    InsufficientQualifying { required: usize, available: usize },

    #[error("benchmark pool has no qualifying initial queries")]
    NoInitialQueries,

    #[error("unknown document or snippet: {0}")]
    UnknownSnippet(String),

    #[error("invalid temperature {0}; must be positive")]
    InvalidTemperature(f64),

    #[error("invalid model config: {0}")]
    Model(String),

    #[error("non-finite activations in encoder output")]
    NonFiniteActivations,

    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged { step: usize },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: [u8; 4] },

    #[error("unsupported format version {found} in {path}")]
    UnsupportedVersion { path: PathBuf, found: u32 },

    #[error("truncated file {path}: {msg}")]
    Truncated { path: PathBuf, msg: String },

    #[error("embedding row {row} has norm {norm}, outside unit tolerance")]
    NormViolation { row: usize, norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("manifest error: {0}")]
    Manifest(String),
}
