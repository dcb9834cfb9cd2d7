//! Error type shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty signal: {0}")]
    EmptySignal(String),

    #[error("empty stream: {0}")]
    EmptyStream(String),

    #[error("segment too short: layer {layer}: {detail}")]
    SegmentTooShort { layer: usize, detail: String },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("layer extraction failed: layer {layer}: {detail}")]
    LayerExtraction { layer: usize, detail: String },

    #[error("modality alignment failed: specimen {specimen}: {ae_layers} AE layers vs {vision_layers} vision layers")]
    Alignment {
        specimen: String,
        ae_layers: usize,
        vision_layers: usize,
    },

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("augmentation failed: class {class}: {detail}")]
    Augmentation { class: String, detail: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("corrupt file {path}: {detail}")]
    CorruptFile { path: String, detail: String },

    #[error("corrupt stream {path}: {detail}")]
    CorruptStream { path: String, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code category: 2 config, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::EmptySignal(_)
            | Error::EmptyStream(_)
            | Error::SegmentTooShort { .. }
            | Error::Alignment { .. }
            | Error::Schema(_)
            | Error::CorruptFile { .. }
            | Error::CorruptStream { .. }
            | Error::Format(_)
            | Error::Io { .. } => 3,
            _ => 4,
        }
    }
}
