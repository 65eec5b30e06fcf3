//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported point count: {0} (1D Gauss rules cover 1..=8 points)")]
    UnsupportedPointCount(usize),

    #[error("grid too large: {points} quadrature points exceed the cap of {cap}")]
    GridTooLarge { points: u128, cap: u64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid neuron: {0}")]
    InvalidNeuron(String),

    #[error("invalid sampling setup: {0}")]
    InvalidSampling(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("singular projection system: pivot {pivot:.3e} at index {index}")]
    SingularProjection { index: usize, pivot: f64 },

    #[error("dictionary exhausted: every candidate duplicates a selected neuron")]
    DictionaryExhausted,

    #[error("degenerate order: errors must be positive and ratio > 1")]
    DegenerateOrder,

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("iteration {index}: {source}")]
    AtIteration {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("table parse error: {0}")]
    TableParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn at_iteration(self, index: usize) -> Self {
        Error::AtIteration {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
