//! Node reservation for the two modules. Each module is an independent pool;
//! queued jobs are granted strictly in submission order.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Mutex;

use thiserror::Error;

use crate::platform::{NodeKind, PlatformConfig};

pub type JobId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JobRequest {
    pub cluster_nodes: usize,
    pub booster_nodes: usize,
}

impl JobRequest {
    pub fn new(cluster_nodes: usize, booster_nodes: usize) -> Self {
        JobRequest {
            cluster_nodes,
            booster_nodes,
        }
    }

    pub fn nodes(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Cluster => self.cluster_nodes,
            NodeKind::Booster => self.booster_nodes,
        }
    }
}

/// Nodes granted to one job, by dense per-module index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub job: JobId,
    pub cluster_set: Vec<usize>,
    pub booster_set: Vec<usize>,
}

impl Allocation {
    pub fn nodes(&self, kind: NodeKind) -> &[usize] {
        match kind {
            NodeKind::Cluster => &self.cluster_set,
            NodeKind::Booster => &self.booster_set,
        }
    }

    /// An allocation not backed by any scheduler, for standalone runs.
    pub fn unmanaged(cluster_nodes: usize, booster_nodes: usize) -> Self {
        Allocation {
            job: 0,
            cluster_set: (0..cluster_nodes).collect(),
            booster_set: (0..booster_nodes).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolState {
    pub cluster_free: Vec<bool>,
    pub booster_free: Vec<bool>,
}

impl PoolState {
    fn pool(&self, kind: NodeKind) -> &[bool] {
        match kind {
            NodeKind::Cluster => &self.cluster_free,
            NodeKind::Booster => &self.booster_free,
        }
    }

    pub fn free(&self, kind: NodeKind) -> usize {
        self.pool(kind).iter().filter(|f| **f).count()
    }

    pub fn busy(&self, kind: NodeKind) -> usize {
        self.pool(kind).len() - self.free(kind)
    }

    pub fn total(&self, kind: NodeKind) -> usize {
        self.pool(kind).len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("job request asks for no nodes")]
    EmptyRequest,
    #[error("job request ({cluster} cluster, {booster} booster) exceeds the machine")]
    NeverSatisfiable { cluster: usize, booster: usize },
    #[error("allocation of job {0} is not live")]
    NotLive(JobId),
    #[error("job request ({cluster} cluster, {booster} booster) cannot be granted now")]
    Unavailable { cluster: usize, booster: usize },
}

struct Inner {
    free: [BTreeSet<usize>; 2],
    sizes: [usize; 2],
    queue: VecDeque<(JobId, JobRequest)>,
    live: Vec<Allocation>,
    next_id: JobId,
}

impl Inner {
    fn fits(&self, req: JobRequest) -> bool {
        req.cluster_nodes <= self.free[0].len() && req.booster_nodes <= self.free[1].len()
    }

    /// Lowest-numbered free nodes of each module.
    fn grant(&mut self, id: JobId, req: JobRequest) -> Allocation {
        let mut take = |k: NodeKind| -> Vec<usize> {
            let pool = &mut self.free[slot(k)];
            let nodes: Vec<usize> = pool.iter().take(req.nodes(k)).copied().collect();
            for n in &nodes {
                pool.remove(n);
            }
            nodes
        };
        let alloc = Allocation {
            job: id,
            cluster_set: take(NodeKind::Cluster),
            booster_set: take(NodeKind::Booster),
        };
        log::debug!("granted job {id}: {:?}", alloc);
        self.live.push(alloc.clone());
        alloc
    }
}

fn slot(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Cluster => 0,
        NodeKind::Booster => 1,
    }
}

pub struct Scheduler {
    inner: Mutex<Inner>,
}

impl Scheduler {
    pub fn new(cluster_nodes: usize, booster_nodes: usize) -> Self {
        Scheduler {
            inner: Mutex::new(Inner {
                free: [(0..cluster_nodes).collect(), (0..booster_nodes).collect()],
                sizes: [cluster_nodes, booster_nodes],
                queue: VecDeque::new(),
                live: Vec::new(),
                next_id: 1,
            }),
        }
    }

    pub fn for_platform(cfg: &PlatformConfig) -> Self {
        Self::new(cfg.cluster.node_count, cfg.booster.node_count)
    }

    fn check(&self, req: JobRequest) -> Result<(), SchedError> {
        let g = self.inner.lock().unwrap();
        if req.cluster_nodes + req.booster_nodes == 0 {
            return Err(SchedError::EmptyRequest);
        }
        if req.cluster_nodes > g.sizes[0] || req.booster_nodes > g.sizes[1] {
            return Err(SchedError::NeverSatisfiable {
                cluster: req.cluster_nodes,
                booster: req.booster_nodes,
            });
        }
        Ok(())
    }

    pub fn submit(&self, req: JobRequest) -> Result<JobId, SchedError> {
        self.check(req)?;
        let mut g = self.inner.lock().unwrap();
        let id = g.next_id;
        g.next_id += 1;
        g.queue.push_back((id, req));
        Ok(id)
    }

    /// Grant queued jobs from the head until one does not fit.
    pub fn try_allocate(&self) -> Vec<Allocation> {
        let mut g = self.inner.lock().unwrap();
        let mut granted = Vec::new();
        while let Some(&(id, req)) = g.queue.front() {
            if !g.fits(req) {
                break;
            }
            g.queue.pop_front();
            granted.push(g.grant(id, req));
        }
        granted
    }

    pub fn release(&self, alloc: &Allocation) -> Result<(), SchedError> {
        let mut g = self.inner.lock().unwrap();
        let pos = g
            .live
            .iter()
            .position(|a| a == alloc)
            .ok_or(SchedError::NotLive(alloc.job))?;
        let a = g.live.swap_remove(pos);
        g.free[0].extend(a.cluster_set);
        g.free[1].extend(a.booster_set);
        Ok(())
    }

    pub fn pool_status(&self) -> PoolState {
        let g = self.inner.lock().unwrap();
        let map = |s: usize| (0..g.sizes[s]).map(|i| g.free[s].contains(&i)).collect();
        PoolState {
            cluster_free: map(0),
            booster_free: map(1),
        }
    }

    pub fn queued(&self) -> usize {
        self.inner.lock().unwrap().queue.len()
    }

    /// Grant `req` at once. Fails without queueing anything if other jobs
    /// are waiting or the nodes are not free.
    pub fn allocate_now(&self, req: JobRequest) -> Result<Allocation, SchedError> {
        self.check(req)?;
        let mut g = self.inner.lock().unwrap();
        if !g.queue.is_empty() || !g.fits(req) {
            return Err(SchedError::Unavailable {
                cluster: req.cluster_nodes,
                booster: req.booster_nodes,
            });
        }
        let id = g.next_id;
        g.next_id += 1;
        Ok(g.grant(id, req))
    }
}
