//! Message-passing runtime with virtual time.
//!
//! Ranks run as OS threads inside one process. Every operation charges a
//! deterministic cost to the calling rank's virtual clock, so the schedule of
//! real threads never shows in results: messages match on exact
//! (context, source, destination, tag) keys in FIFO order and collectives are
//! resolved once from the contributions of all members.

mod comm;
mod process;
mod runtime;
mod trace;

pub use comm::{CommId, CommKind, Communicator, Endpoint, InterComm, Rank, RankId, ReduceOp, Request, WorldId};
pub use process::Process;
pub use runtime::{tree_reduce, tree_rounds, RoleFn, RoleResult, RunOutcome, Runtime, WorldInfo};
pub use trace::{trace_csv, TraceEvent};

use thiserror::Error;

/// Errors visible to a running rank.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MprtError {
    #[error("rank index {index} out of range for group of {size}")]
    InvalidRank { index: usize, size: usize },
    #[error("deadlock: every live rank is blocked ({0})")]
    Deadlock(String),
    #[error("request {0} already completed")]
    DoubleWait(u64),
    #[error("unknown request {0}")]
    UnknownRequest(u64),
    #[error("collective arguments disagree on {comm}: {detail}")]
    CollectiveMismatch { comm: CommId, detail: String },
    #[error("caller is not a member of communicator {0}")]
    NotMember(CommId),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("allocation holds {have} {kind} nodes, {need} required")]
    InsufficientAllocation {
        kind: crate::platform::NodeKind,
        need: usize,
        have: usize,
    },
    #[error("spawn of zero ranks")]
    EmptySpawn,
    #[error("run aborted")]
    Aborted,
}

/// Errors of a whole launch, reported after every rank has drained.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Launch(MprtError),
    #[error("rank {rank} failed: {message}")]
    Role { rank: RankId, message: String },
    #[error("rank {0} panicked")]
    Panic(RankId),
    #[error("deadlock ({blocked}); unmatched messages: [{}]", .unmatched.join(", "))]
    Deadlock {
        blocked: String,
        unmatched: Vec<String>,
    },
    #[error("unmatched messages at drain: [{}]", .0.join(", "))]
    Unmatched(Vec<String>),
}
