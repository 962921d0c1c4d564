use thiserror::Error;

/// Errors produced by topology construction, DAG parsing, configuration, and
/// benchmark verification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {requested} workers > {sockets} sockets x {cores} cores")]
    CapacityExceeded {
        requested: usize,
        sockets: usize,
        cores: usize,
    },

    #[error("topology arguments must be positive (got sockets={sockets}, cores={cores}, workers={workers})")]
    ZeroTopologyArgument {
        sockets: usize,
        cores: usize,
        workers: usize,
    },

    #[error("unknown data block id {0}")]
    UnknownBlock(u32),

    #[error("invalid socket index {index} (socket count {count})")]
    InvalidSocket { index: usize, count: usize },

    #[error("malformed computation: {0}")]
    MalformedDag(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("benchmark output failed its oracle check: {0}")]
    OracleMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
