//! Reference model for the scheduler: plain vectors, no cleverness.

use std::collections::{BTreeMap, VecDeque};

use cbemu::modsched::{Allocation, JobRequest, SchedError, Scheduler};
use cbemu::NodeKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default)]
pub struct SchedStats {
    pub ops: usize,
    pub grants: usize,
    pub releases: usize,
    pub double_allocations: usize,
    pub conservation_violations: usize,
    pub order_violations: usize,
    pub mismatches: Vec<String>,
}

impl SchedStats {
    pub fn clean(&self) -> bool {
        self.double_allocations == 0
            && self.conservation_violations == 0
            && self.order_violations == 0
            && self.mismatches.is_empty()
    }
}

struct Model {
    free: [Vec<bool>; 2],
    queue: VecDeque<(u64, JobRequest)>,
    live: BTreeMap<u64, Allocation>,
    next_id: u64,
}

impl Model {
    fn new(c: usize, b: usize) -> Self {
        Model {
            free: [vec![true; c], vec![true; b]],
            queue: VecDeque::new(),
            live: BTreeMap::new(),
            next_id: 1,
        }
    }

    fn free_count(&self, k: usize) -> usize {
        self.free[k].iter().filter(|f| **f).count()
    }

    fn grant_head(&mut self) -> Vec<Allocation> {
        let mut out = Vec::new();
        while let Some(&(id, req)) = self.queue.front() {
            if req.cluster_nodes > self.free_count(0) || req.booster_nodes > self.free_count(1) {
                break;
            }
            self.queue.pop_front();
            let mut sets = [Vec::new(), Vec::new()];
            for (k, want) in [req.cluster_nodes, req.booster_nodes].into_iter().enumerate() {
                for i in 0..self.free[k].len() {
                    if sets[k].len() == want {
                        break;
                    }
                    if self.free[k][i] {
                        self.free[k][i] = false;
                        sets[k].push(i);
                    }
                }
            }
            let [cluster_set, booster_set] = sets;
            let a = Allocation {
                job: id,
                cluster_set,
                booster_set,
            };
            self.live.insert(id, a.clone());
            out.push(a);
        }
        out
    }
}

/// Drive `ops` random submit / allocate / release operations against a
/// scheduler of `c` + `b` nodes and the model side by side.
pub fn run_sched_oracle(seed: u64, ops: usize, c: usize, b: usize) -> SchedStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Scheduler::new(c, b);
    let mut m = Model::new(c, b);
    let mut st = SchedStats::default();
    let mut released: Vec<Allocation> = Vec::new();
    let mut last_granted_id = 0;
    // allocations as handed out by the scheduler itself
    let mut held_by_sched: BTreeMap<u64, Allocation> = BTreeMap::new();

    for op in 0..ops {
        st.ops += 1;
        match rng.gen_range(0..10) {
            0..=3 => {
                let req = JobRequest::new(rng.gen_range(0..=c + 1), rng.gen_range(0..=b + 1));
                let got = s.submit(req);
                let want = if req.cluster_nodes + req.booster_nodes == 0 {
                    Err(SchedError::EmptyRequest)
                } else if req.cluster_nodes > c || req.booster_nodes > b {
                    Err(SchedError::NeverSatisfiable {
                        cluster: req.cluster_nodes,
                        booster: req.booster_nodes,
                    })
                } else {
                    let id = m.next_id;
                    m.next_id += 1;
                    m.queue.push_back((id, req));
                    Ok(id)
                };
                if got != want {
                    st.mismatches.push(format!("op {op}: submit {req:?}: {got:?} vs {want:?}"));
                }
            }
            4..=6 => {
                let got = s.try_allocate();
                let want = m.grant_head();
                for a in &got {
                    held_by_sched.insert(a.job, a.clone());
                }
                for a in &got {
                    if a.job <= last_granted_id {
                        st.order_violations += 1;
                    }
                    last_granted_id = a.job;
                }
                st.grants += got.len();
                if got != want {
                    st.mismatches.push(format!("op {op}: grants {got:?} vs {want:?}"));
                }
            }
            7..=8 => {
                if m.live.is_empty() {
                    continue;
                }
                let k = rng.gen_range(0..m.live.len());
                let id = *m.live.keys().nth(k).unwrap();
                let a = m.live.remove(&id).unwrap();
                held_by_sched.remove(&id);
                for &n in &a.cluster_set {
                    m.free[0][n] = true;
                }
                for &n in &a.booster_set {
                    m.free[1][n] = true;
                }
                if let Err(e) = s.release(&a) {
                    st.mismatches.push(format!("op {op}: release {id}: {e}"));
                }
                st.releases += 1;
                released.push(a);
            }
            _ => {
                if let Some(a) = released.get(rng.gen_range(0..released.len().max(1))) {
                    if s.release(a) != Err(SchedError::NotLive(a.job)) {
                        st.mismatches.push(format!("op {op}: second release of {} accepted", a.job));
                    }
                }
            }
        }

        // every node held by at most one live job, never while marked free,
        // and free + held = total
        let mut held = [vec![0usize; c], vec![0usize; b]];
        for a in held_by_sched.values() {
            for &n in &a.cluster_set {
                held[0][n] += 1;
            }
            for &n in &a.booster_set {
                held[1][n] += 1;
            }
        }
        let pool = s.pool_status();
        for (k, kind) in NodeKind::ALL.into_iter().enumerate() {
            let flags = if k == 0 { &pool.cluster_free } else { &pool.booster_free };
            st.double_allocations += held[k]
                .iter()
                .zip(flags)
                .filter(|(h, f)| **h > 1 || (**h == 1 && **f))
                .count();
            let busy = held[k].iter().filter(|h| **h > 0).count();
            if pool.free(kind) + busy != pool.total(kind) || pool.total(kind) != [c, b][k] {
                st.conservation_violations += 1;
            }
            if flags.iter().zip(&m.free[k]).any(|(x, y)| x != y) {
                st.mismatches.push(format!("op {op}: {kind} pool differs from model"));
            }
        }
        if s.queued() != m.queue.len() {
            st.mismatches.push(format!("op {op}: queue length {} vs {}", s.queued(), m.queue.len()));
        }
        if st.mismatches.len() > 10 {
            break;
        }
    }
    st
}
