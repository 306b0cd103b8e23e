use thiserror::Error;

use crate::network::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("no route from node {from} to node {to}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("invalid tour problem: {0}")]
    Tour(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
