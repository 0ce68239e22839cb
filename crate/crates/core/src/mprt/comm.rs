use std::fmt;
use std::sync::Arc;

use crate::platform::NodeKind;

pub type WorldId = u32;
pub type CommId = u64;

/// Global identity of a rank: its world and 0-based index inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankId {
    pub world: WorldId,
    pub index: usize,
}

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}r{}", self.world, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rank {
    pub id: RankId,
    pub node_kind: NodeKind,
    pub node_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommKind {
    World,
    Inter,
}

/// An ordered group of ranks. `me` is the owner's position, if it is a member.
#[derive(Clone, Debug)]
pub struct Communicator {
    pub(crate) id: CommId,
    pub(crate) kind: CommKind,
    pub(crate) members: Arc<[Rank]>,
    pub(crate) me: Option<usize>,
}

impl Communicator {
    pub fn id(&self) -> CommId {
        self.id
    }

    pub fn kind(&self) -> CommKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Rank] {
        &self.members
    }

    pub fn rank(&self) -> Option<usize> {
        self.me
    }

    pub fn member(&self, index: usize) -> Option<&Rank> {
        self.members.get(index)
    }

    pub fn same_group(&self, other: &Communicator) -> bool {
        self.id == other.id && self.members == other.members
    }
}

/// Connection between two disjoint groups. Both sides share `id`; each side
/// sees its own group as `local_group`.
#[derive(Clone, Debug)]
pub struct InterComm {
    pub(crate) id: CommId,
    pub local_group: Communicator,
    pub remote_group: Communicator,
}

impl InterComm {
    pub fn id(&self) -> CommId {
        self.id
    }

    pub fn local_size(&self) -> usize {
        self.local_group.size()
    }

    pub fn remote_size(&self) -> usize {
        self.remote_group.size()
    }

    pub fn rank(&self) -> Option<usize> {
        self.local_group.me
    }
}

/// Anything point-to-point traffic can be addressed through.
pub trait Endpoint {
    fn context(&self) -> CommId;
    fn peer(&self, index: usize) -> Option<&Rank>;
    fn peer_count(&self) -> usize;
}

impl Endpoint for Communicator {
    fn context(&self) -> CommId {
        self.id
    }
    fn peer(&self, index: usize) -> Option<&Rank> {
        self.members.get(index)
    }
    fn peer_count(&self) -> usize {
        self.size()
    }
}

impl Endpoint for InterComm {
    fn context(&self) -> CommId {
        self.id
    }
    fn peer(&self, index: usize) -> Option<&Rank> {
        self.remote_group.members.get(index)
    }
    fn peer_count(&self) -> usize {
        self.remote_size()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
}

/// Handle of a non-blocking operation. Waiting twice on one handle is an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    pub(crate) id: u64,
}
