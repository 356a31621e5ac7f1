use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments or configuration; the message names the violated invariant.
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("data: {0}")]
    Data(String),

    /// Voxel whose two groups have zero pooled variance but different means.
    #[error("degenerate voxel {voxel}: zero pooled variance with unequal group means")]
    DegenerateVoxel { voxel: usize },

    /// The observed rows of the basis are too poorly conditioned for a least-squares fit.
    /// Callers should draw a fresh index set.
    #[error("ill-conditioned sampled basis (condition estimate {condition:.3e}); resample the index set")]
    IllConditioned { condition: f64 },

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("materializing T needs {required} bytes, cap is {cap} bytes")]
    MemoryCap { required: u64, cap: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::MemoryCap { .. } => 2,
            Error::Load { .. } | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::DegenerateVoxel { .. } | Error::IllConditioned { .. } | Error::Numerical(_) => 4,
        }
    }
}
