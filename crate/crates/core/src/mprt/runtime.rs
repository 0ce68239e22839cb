use std::any::Any;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::error::Error;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use crate::modsched::Allocation;
use crate::platform::{NodeKind, PlatformConfig};

use super::comm::{CommId, CommKind, Communicator, InterComm, Rank, RankId, ReduceOp, WorldId};
use super::process::Process;
use super::trace::TraceEvent;
use super::{MprtError, RunError};

pub type RoleResult = Result<Box<dyn Any + Send>, Box<dyn Error + Send + Sync>>;
pub type RoleFn = Arc<dyn Fn(&mut Process) -> RoleResult + Send + Sync>;

/// Number of binomial-tree rounds for a group of `n`.
pub fn tree_rounds(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Elementwise reduction along the binomial tree over member indices:
/// in round `s`, member `i` (a multiple of `2s`) absorbs member `i + s`.
pub fn tree_reduce(values: &[Vec<f64>], op: ReduceOp) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<Vec<f64>> = values.to_vec();
    let mut step = 1;
    while step < n {
        let mut i = 0;
        while i + step < n {
            let (lo, hi) = v.split_at_mut(i + step);
            for (a, b) in lo[i].iter_mut().zip(&hi[0]) {
                *a = match op {
                    ReduceOp::Sum => *a + *b,
                    ReduceOp::Max => a.max(*b),
                };
            }
            i += 2 * step;
        }
        step *= 2;
    }
    v.swap_remove(0)
}

#[derive(Clone, Debug)]
pub struct WorldInfo {
    pub id: WorldId,
    pub role: String,
    pub ranks: Vec<Rank>,
    pub parent: Option<WorldId>,
}

pub struct RunOutcome {
    pub outputs: BTreeMap<RankId, Box<dyn Any + Send>>,
    pub clocks: BTreeMap<RankId, f64>,
    pub trace: Vec<TraceEvent>,
    pub worlds: Vec<WorldInfo>,
}

impl RunOutcome {
    /// Latest final clock over every rank of every world.
    pub fn makespan(&self) -> f64 {
        self.clocks.values().copied().fold(0.0, f64::max)
    }

    pub fn take<T: 'static>(&mut self, rank: RankId) -> Option<T> {
        let b = self.outputs.remove(&rank)?;
        b.downcast::<T>().ok().map(|b| *b)
    }

    pub fn world(&self, role: &str) -> Option<&WorldInfo> {
        self.worlds.iter().find(|w| w.role == role)
    }
}

pub(crate) type MsgKey = (CommId, RankId, RankId, i32);
pub(crate) type CollKey = (CommId, u64);

pub(crate) struct Message {
    pub payload: Vec<u8>,
    pub send_time: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum Wait {
    Msg(MsgKey),
    Coll(CollKey),
}

pub(crate) enum CollBody {
    Allreduce { op: ReduceOp, values: Vec<f64> },
    Barrier,
    Spawn {
        role: String,
        n: usize,
        kind: NodeKind,
        alloc: Allocation,
    },
}

pub(crate) struct Contribution {
    pub clock: f64,
    pub body: CollBody,
}

pub(crate) struct CollOut {
    pub clock: f64,
    pub values: Vec<f64>,
    pub spawned: Option<(CommId, Communicator)>,
}

struct Coll {
    slots: Vec<Option<Contribution>>,
    arrived: usize,
    result: Option<Result<Arc<CollOut>, MprtError>>,
    readers: usize,
}

struct RankExit {
    id: RankId,
    clock: f64,
    output: Result<Box<dyn Any + Send>, Box<dyn Error + Send + Sync>>,
    trace: Vec<TraceEvent>,
}

#[derive(Default)]
pub(crate) struct State {
    next_world: WorldId,
    next_comm: CommId,
    worlds: Vec<WorldInfo>,
    mail: BTreeMap<MsgKey, VecDeque<Message>>,
    colls: HashMap<CollKey, Coll>,
    waiting: BTreeMap<RankId, Wait>,
    live: usize,
    deadlock: Option<String>,
    handles: Vec<(RankId, JoinHandle<RankExit>)>,
}

impl State {
    fn fresh_comm(&mut self) -> CommId {
        self.next_comm += 1;
        self.next_comm
    }

    fn wake(&mut self, pred: impl Fn(&Wait) -> bool) {
        self.waiting.retain(|_, w| !pred(w));
    }

    fn check_deadlock(&mut self) -> bool {
        if self.deadlock.is_none() && self.live > 0 && self.waiting.len() == self.live {
            let desc = self
                .waiting
                .iter()
                .map(|(r, w)| match w {
                    Wait::Msg((c, src, _, tag)) => format!("{r} recv from {src} tag {tag} on comm {c}"),
                    Wait::Coll((c, s)) => format!("{r} in collective #{s} on comm {c}"),
                })
                .collect::<Vec<_>>()
                .join("; ");
            log::warn!("deadlock: {desc}");
            self.deadlock = Some(desc);
            true
        } else {
            false
        }
    }
}

pub(crate) struct Shared {
    pub cfg: Arc<PlatformConfig>,
    roles: HashMap<String, RoleFn>,
    ranks_per_node: usize,
    pub tracing: bool,
    state: Mutex<State>,
    cv: Condvar,
}

struct LiveGuard(Arc<Shared>);

impl Drop for LiveGuard {
    fn drop(&mut self) {
        let mut st = self.0.lock();
        st.live -= 1;
        st.check_deadlock();
        self.0.cv.notify_all();
    }
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Block `me` until `ready` yields, or fail once the run is deadlocked.
    pub(crate) fn block_until<T>(
        &self,
        me: RankId,
        wait: Wait,
        mut ready: impl FnMut(&mut State) -> Option<T>,
    ) -> Result<T, MprtError> {
        let mut st = self.lock();
        loop {
            if let Some(t) = ready(&mut st) {
                st.waiting.remove(&me);
                return Ok(t);
            }
            if let Some(d) = &st.deadlock {
                let d = d.clone();
                st.waiting.remove(&me);
                return Err(MprtError::Deadlock(d));
            }
            st.waiting.insert(me, wait.clone());
            if st.check_deadlock() {
                self.cv.notify_all();
                continue;
            }
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub(crate) fn deposit(&self, key: MsgKey, msg: Message) {
        let mut st = self.lock();
        st.mail.entry(key).or_default().push_back(msg);
        st.wake(|w| matches!(w, Wait::Msg(k) if *k == key));
        self.cv.notify_all();
    }

    pub(crate) fn take_message(&self, me: RankId, key: MsgKey) -> Result<Message, MprtError> {
        self.block_until(me, Wait::Msg(key), |st| {
            let q = st.mail.get_mut(&key)?;
            let m = q.pop_front();
            if q.is_empty() {
                st.mail.remove(&key);
            }
            m
        })
    }

    /// Contribute to collective `seq` on `comm`; returns the shared resolution.
    pub(crate) fn collective(
        self: &Arc<Self>,
        me: RankId,
        comm: &Communicator,
        seq: u64,
        contribution: Contribution,
    ) -> Result<Arc<CollOut>, MprtError> {
        let idx = comm.me.ok_or(MprtError::NotMember(comm.id))?;
        let key = (comm.id, seq);
        let size = comm.size();
        {
            let mut st = self.lock();
            let c = st.colls.entry(key).or_insert_with(|| Coll {
                slots: (0..size).map(|_| None).collect(),
                arrived: 0,
                result: None,
                readers: size,
            });
            c.slots[idx] = Some(contribution);
            c.arrived += 1;
            if c.arrived == size {
                let slots: Vec<Contribution> =
                    c.slots.iter_mut().map(|s| s.take().unwrap()).collect();
                let res = self.resolve(&mut st, comm, slots).map(Arc::new);
                st.colls.get_mut(&key).unwrap().result = Some(res);
                st.wake(|w| matches!(w, Wait::Coll(k) if *k == key));
                self.cv.notify_all();
            }
        }
        self.block_until(me, Wait::Coll(key), |st| {
            let c = st.colls.get_mut(&key)?;
            let r = c.result.clone()?;
            c.readers -= 1;
            if c.readers == 0 {
                st.colls.remove(&key);
            }
            Some(r)
        })?
    }

    fn tree_hop(&self, comm: &Communicator, bytes: usize) -> f64 {
        let kind = comm
            .members
            .iter()
            .map(|r| r.node_kind)
            .max_by(|a, b| {
                let la = self.cfg.module(*a).mpi_latency;
                let lb = self.cfg.module(*b).mpi_latency;
                la.total_cmp(&lb)
            })
            .unwrap_or(NodeKind::Cluster);
        self.cfg.comm_cost(bytes, kind, kind)
    }

    fn resolve(
        self: &Arc<Self>,
        st: &mut State,
        comm: &Communicator,
        slots: Vec<Contribution>,
    ) -> Result<CollOut, MprtError> {
        let entry = slots.iter().map(|c| c.clock).fold(f64::NEG_INFINITY, f64::max);
        let mismatch = |detail: String| MprtError::CollectiveMismatch {
            comm: comm.id,
            detail,
        };
        let rounds = tree_rounds(comm.size()) as f64;
        match &slots[0].body {
            CollBody::Allreduce { op, values } => {
                let mut all = Vec::with_capacity(slots.len());
                for c in &slots {
                    match &c.body {
                        CollBody::Allreduce { op: o, values: v } if o == op && v.len() == values.len() => {
                            all.push(v.clone())
                        }
                        CollBody::Allreduce { .. } => {
                            return Err(mismatch("allreduce operator or length".into()))
                        }
                        _ => return Err(mismatch("mixed collective operations".into())),
                    }
                }
                let hop = self.tree_hop(comm, 8 * values.len());
                Ok(CollOut {
                    clock: entry + 2.0 * rounds * hop,
                    values: tree_reduce(&all, *op),
                    spawned: None,
                })
            }
            CollBody::Barrier => {
                if slots.iter().any(|c| !matches!(c.body, CollBody::Barrier)) {
                    return Err(mismatch("mixed collective operations".into()));
                }
                Ok(CollOut {
                    clock: entry + 2.0 * rounds * self.tree_hop(comm, 0),
                    values: Vec::new(),
                    spawned: None,
                })
            }
            CollBody::Spawn {
                role,
                n,
                kind,
                alloc,
            } => {
                for c in &slots {
                    match &c.body {
                        CollBody::Spawn {
                            role: r,
                            n: m,
                            kind: k,
                            alloc: a,
                        } if r == role && m == n && k == kind && a == alloc => {}
                        _ => return Err(mismatch("spawn arguments".into())),
                    }
                }
                let parent_world = comm.members[0].id.world;
                let inter = st.fresh_comm();
                let children = self.start_world(
                    st,
                    role,
                    *n,
                    *kind,
                    alloc,
                    entry,
                    Some((inter, parent_world, strip(comm))),
                )?;
                Ok(CollOut {
                    clock: entry,
                    values: Vec::new(),
                    spawned: Some((inter, children)),
                })
            }
        }
    }

    /// Create a world running `role` and start its rank threads.
    fn start_world(
        self: &Arc<Self>,
        st: &mut State,
        role: &str,
        n: usize,
        kind: NodeKind,
        alloc: &Allocation,
        clock: f64,
        parent: Option<(CommId, WorldId, Communicator)>,
    ) -> Result<Communicator, MprtError> {
        let f = self
            .roles
            .get(role)
            .cloned()
            .ok_or_else(|| MprtError::UnknownRole(role.to_string()))?;
        if n == 0 {
            return Err(MprtError::EmptySpawn);
        }
        let nodes = alloc.nodes(kind);
        let need = n.div_ceil(self.ranks_per_node);
        if nodes.len() < need {
            return Err(MprtError::InsufficientAllocation {
                kind,
                need,
                have: nodes.len(),
            });
        }
        let world = st.next_world;
        st.next_world += 1;
        let ranks: Vec<Rank> = (0..n)
            .map(|i| Rank {
                id: RankId { world, index: i },
                node_kind: kind,
                node_index: nodes[i % need],
            })
            .collect();
        let members: Arc<[Rank]> = ranks.clone().into();
        let comm_id = st.fresh_comm();
        st.worlds.push(WorldInfo {
            id: world,
            role: role.to_string(),
            ranks: ranks.clone(),
            parent: parent.as_ref().map(|p| p.1),
        });
        st.live += n;
        for rank in ranks {
            let world_comm = Communicator {
                id: comm_id,
                kind: CommKind::World,
                members: members.clone(),
                me: Some(rank.id.index),
            };
            let parent_inter = parent.as_ref().map(|(id, _, group)| InterComm {
                id: *id,
                local_group: world_comm.clone(),
                remote_group: group.clone(),
            });
            let shared = self.clone();
            let f = f.clone();
            let alloc = alloc.clone();
            let handle = thread::Builder::new()
                .name(format!("{role}-{}", rank.id))
                .spawn(move || {
                    let guard = LiveGuard(shared.clone());
                    let mut p = Process::new(shared, rank, world_comm, parent_inter, clock, alloc);
                    let output = match panic::catch_unwind(AssertUnwindSafe(|| f(&mut p))) {
                        Ok(r) => r,
                        Err(_) => Err(format!("rank {} panicked", rank.id).into()),
                    };
                    drop(guard);
                    let (clock, trace) = p.finish();
                    RankExit {
                        id: rank.id,
                        clock,
                        output,
                        trace,
                    }
                })
                .expect("rank thread spawn");
            st.handles.push((rank.id, handle));
        }
        Ok(Communicator {
            id: comm_id,
            kind: CommKind::World,
            members,
            me: None,
        })
    }
}

/// The same group seen from outside.
fn strip(c: &Communicator) -> Communicator {
    Communicator {
        me: None,
        ..c.clone()
    }
}

/// Registry of named roles plus the platform they run on.
pub struct Runtime {
    cfg: Arc<PlatformConfig>,
    roles: HashMap<String, RoleFn>,
    ranks_per_node: usize,
    tracing: bool,
}

impl Runtime {
    pub fn new(cfg: PlatformConfig) -> Self {
        Runtime {
            cfg: Arc::new(cfg),
            roles: HashMap::new(),
            ranks_per_node: 1,
            tracing: false,
        }
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.cfg
    }

    pub fn with_tracing(mut self, on: bool) -> Self {
        self.tracing = on;
        self
    }

    pub fn with_ranks_per_node(mut self, rpn: usize) -> Self {
        assert!(rpn >= 1);
        self.ranks_per_node = rpn;
        self
    }

    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&mut Process) -> RoleResult + Send + Sync + 'static,
    {
        self.roles.insert(name.to_string(), Arc::new(f));
    }

    pub fn has_role(&self, name: &str) -> bool {
        self.roles.contains_key(name)
    }

    /// Start `n` ranks of `role` on `kind` nodes of `alloc` and run every
    /// world (including spawned ones) to completion.
    pub fn launch(
        &self,
        role: &str,
        n: usize,
        kind: NodeKind,
        alloc: &Allocation,
    ) -> Result<RunOutcome, RunError> {
        let shared = Arc::new(Shared {
            cfg: self.cfg.clone(),
            roles: self.roles.clone(),
            ranks_per_node: self.ranks_per_node,
            tracing: self.tracing,
            state: Mutex::new(State::default()),
            cv: Condvar::new(),
        });
        {
            let mut st = shared.lock();
            shared
                .start_world(&mut st, role, n, kind, alloc, 0.0, None)
                .map_err(RunError::Launch)?;
        }

        let mut exits = Vec::new();
        let mut panicked = Vec::new();
        loop {
            let handles = std::mem::take(&mut shared.lock().handles);
            if handles.is_empty() {
                break;
            }
            for (id, h) in handles {
                match h.join() {
                    Ok(e) => exits.push(e),
                    Err(_) => panicked.push(id),
                }
            }
        }
        exits.sort_by_key(|e| e.id);

        let mut st = shared.lock();
        let unmatched: Vec<String> = st
            .mail
            .iter()
            .map(|((c, src, dst, tag), q)| {
                format!("{} msg {src}->{dst} tag {tag} comm {c}", q.len())
            })
            .collect();

        if let Some(id) = panicked.first() {
            return Err(RunError::Panic(*id));
        }
        let root_cause = exits.iter().find_map(|e| match &e.output {
            Err(err) => match err.downcast_ref::<MprtError>() {
                Some(MprtError::Deadlock(_)) => None,
                _ => Some(RunError::Role {
                    rank: e.id,
                    message: err.to_string(),
                }),
            },
            Ok(_) => None,
        });
        if let Some(e) = root_cause {
            return Err(e);
        }
        if let Some(d) = st.deadlock.take() {
            return Err(RunError::Deadlock {
                blocked: d,
                unmatched,
            });
        }
        if !unmatched.is_empty() {
            return Err(RunError::Unmatched(unmatched));
        }

        let mut trace = Vec::new();
        let mut outputs = BTreeMap::new();
        let mut clocks = BTreeMap::new();
        for e in exits {
            trace.extend(e.trace);
            clocks.insert(e.id, e.clock);
            if let Ok(o) = e.output {
                outputs.insert(e.id, o);
            }
        }
        // stable: per-rank order preserved among equal times
        trace.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.rank.cmp(&b.rank)));
        Ok(RunOutcome {
            outputs,
            clocks,
            trace,
            worlds: std::mem::take(&mut st.worlds),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds() {
        assert_eq!(
            (1..=9).map(tree_rounds).collect::<Vec<_>>(),
            vec![0, 1, 2, 2, 3, 3, 3, 3, 4]
        );
    }

    #[test]
    fn tree_order_is_fixed() {
        let v: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|x| vec![*x]).collect();
        // ((1+2)+(3+4))+5
        assert_eq!(tree_reduce(&v, ReduceOp::Sum), vec![15.0]);
        assert_eq!(tree_reduce(&v, ReduceOp::Max), vec![5.0]);
        let w = vec![vec![1e16], vec![1.0], vec![-1e16], vec![1.0]];
        let expect = (1e16 + 1.0) + (-1e16 + 1.0);
        assert_eq!(tree_reduce(&w, ReduceOp::Sum), vec![expect]);
    }
}
