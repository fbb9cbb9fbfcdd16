use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("crop window out of bounds: {coordinate} = {value} exceeds limit {limit}")]
    Bounds {
        coordinate: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalar(Vec<usize>),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape {
        op,
        detail: detail.into(),
    })
}
