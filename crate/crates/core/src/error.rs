use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no users in population")]
    NoUsers,
    #[error("user has no accepted posts")]
    EmptyUser,
    #[error("posts belong to more than one user or language")]
    MixedUser,
    #[error("duplicate lexicon entry {word:?} at line {line}")]
    DuplicateWord { word: String, line: usize },
    #[error("curve has no elbow: curvature is zero everywhere")]
    NoElbow,
    #[error("difference curve has no local maximum")]
    NoKnee,
    #[error("elbow inversion: k0 = {k0} is not below k1 = {k1}")]
    Inversion { k0: usize, k1: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("rank-deficient design; aliased columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("every group is suppressed ({suppressed} suppressed groups, {users} users in total)")]
    AllSuppressed { suppressed: usize, users: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code class: 1 data, 2 spec/config, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NoElbow
            | Error::NoKnee
            | Error::Inversion { .. }
            | Error::RankDeficient { .. }
            | Error::Numerical(_)
            | Error::Degenerate(_) => 3,
            _ => 1,
        }
    }
}
