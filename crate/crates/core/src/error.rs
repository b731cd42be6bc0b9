use std::path::PathBuf;

use gti_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("node id {id} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { id: usize, node_count: usize },

    #[error("duplicate node id {0}")]
    DuplicateNode(usize),

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("[{phase}] {inner}")]
    Phase { phase: &'static str, inner: Box<Error> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err: source,
        }
    }

    /// Tags the error with the pipeline phase it came from.
    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            inner: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
