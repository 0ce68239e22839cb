//! Multi-level checkpoint/restart: per-node container files, buddy-node
//! replication, a global tier, and interval planning from a failure model.

pub mod container;
pub mod plan;
pub mod store;

use thiserror::Error;

pub use container::{container_pack, container_unpack, fnv1a64, CheckpointBlock};
pub use plan::{plan_interval, FailureModel};
pub use store::{CheckpointLevel, CheckpointSet, CheckpointStore, Restored};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CkptError {
    #[error("checksum mismatch in the block of rank {rank}")]
    ChecksumMismatch { rank: u32 },
    #[error("truncated container: {0}")]
    Truncated(String),
    #[error("malformed container header: {0}")]
    BadHeader(String),
    #[error("blocks from epochs {expected} and {found} in one container")]
    MixedEpoch { expected: u64, found: u64 },
    #[error("rank {0} appears twice in one container")]
    DuplicateRank(u32),
    #[error("expected images for {expected} ranks, got {got}")]
    RankCount { expected: usize, got: usize },
    #[error("storage: {0}")]
    Io(String),
    #[error("no epoch is recoverable under this failure set")]
    NoRecoverableEpoch,
    #[error("invalid failure model: {0}")]
    InvalidModel(String),
}
