use thiserror::Error;

/// Errors surfaced by the sliding filter and its supporting structures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The cuckoo walk ran out of kicks. The dictionary is left exactly as it
    /// was before the call apart from reclaimed stale cells; rebuilding with a
    /// different seed is the expected recovery.
    #[error("dictionary insert overflow after {kicks} kicks")]
    InsertOverflow { kicks: usize },

    #[error("element {x} is outside the universe [0, {u})")]
    OutOfUniverse { x: u64, u: u128 },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
