use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (L_a = {l_a}, L_s = {l_s})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        l_a: f64,
        l_s: f64,
    },
    #[error("checkpoint was trained with k = {checkpoint}, but k = {requested} was requested")]
    KMismatch { checkpoint: usize, requested: usize },
}
