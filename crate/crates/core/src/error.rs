/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid earth model: {0}")]
    InvalidModel(String),

    #[error("numerical failure at {frequency} Hz: {detail}")]
    NumericalFailure { frequency: f64, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate signal: receiver {receiver} has an all-zero trace")]
    DegenerateSignal { receiver: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{parameter} = {value} lies outside its range")]
    Range { parameter: String, value: f64 },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("generation failed at sample {index} ({model}): {source}")]
    Generation {
        index: usize,
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
