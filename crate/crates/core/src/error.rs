use thiserror::Error;

use crate::phy::Node;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no link between {0} and {1}")]
    MissingLink(Node, Node),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid physical-layer parameter: {0}")]
    InvalidPhy(String),

    #[error("invalid access configuration: {0}")]
    InvalidAccess(String),

    #[error("exact enumeration over {users} users exceeds the limit of {limit}")]
    EnumerationTooLarge { users: usize, limit: usize },

    /// Loynes condition violated: mean drift of the nonempty queue is not negative.
    #[error("relay queue is unstable (drift {drift:.6e} packets/slot from nonempty states)")]
    Unstable { drift: f64 },

    #[error("truncated stationary solution lost {tail:.3e} probability mass beyond state {truncation}")]
    TruncationTail { tail: f64, truncation: usize },

    #[error("{0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
