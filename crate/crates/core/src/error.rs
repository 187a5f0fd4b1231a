use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid payload: {0}")]
    InvalidPayload(String),

    #[error("degenerate attention mass: total head mass is zero")]
    DegenerateMass,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge: {0}")]
    Convergence(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("trace format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("unsupported trace format version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("baseline unavailable: {0}")]
    UnavailableBaseline(String),

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_layer(self, layer: usize) -> Self {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
