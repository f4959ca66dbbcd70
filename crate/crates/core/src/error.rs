use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An input failed a documented precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// Discretisation parameters cannot produce a valid scheme.
    #[error("configuration error: {0}")]
    Config(String),
    /// A driver, claim or interval literal could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("fixed-point iteration did not converge at step {step}, node {node} after {iterations} iterations")]
    NotConverged {
        step: usize,
        node: usize,
        iterations: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
