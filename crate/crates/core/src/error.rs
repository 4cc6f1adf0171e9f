//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precision exhausted: {0}")]
    Precision(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("sum did not stabilise: {0}")]
    NotStabilised(String),
}

pub type Result<T> = std::result::Result<T, Error>;
