use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HtiError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),
}

impl HtiError {
    pub fn data(msg: impl Into<String>) -> Self {
        HtiError::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HtiError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        HtiError::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        HtiError::Format(msg.into())
    }
}

pub type Result<T, E = HtiError> = std::result::Result<T, E>;
