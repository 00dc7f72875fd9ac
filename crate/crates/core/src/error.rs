use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty trace")]
    EmptyTrace,

    #[error("line size {0} is not a power of two")]
    InvalidLineSize(u64),

    #[error("parse error at record {record} (line {line}): {message}")]
    Parse {
        record: usize,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stale stream: member index {index} is out of range for a trace of {len} accesses")]
    StaleStream { index: usize, len: usize },

    /// A component broke an internal contract, e.g. a policy named a victim
    /// that is not resident in the set.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by broken internal invariants rather than bad data.
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, Error::Contract(_))
    }
}
