use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coordinate {index} = {value} lies outside the domain [{lower}, {upper}]")]
    Domain {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("evaluation produced a non-finite value: {0}")]
    Evaluation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
