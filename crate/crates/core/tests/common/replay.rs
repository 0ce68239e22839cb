//! Clock oracle. Rebuilds every rank's virtual clock from the platform
//! constants and the counts the run recorded (particles pushed and deposited,
//! migration rounds, CG iterations and residual checks), using nothing but
//! arithmetic. It does not touch the runtime.

use cbemu::harness::{Mode, RunReport};
use cbemu::xpic::{RankLog, SideKind, SimParams};
use cbemu::{NodeKind, PlatformConfig};

const HEADER: usize = 16;

#[derive(Debug)]
pub struct Replay {
    pub makespan: f64,
    /// Clock at the end of each step, per (side, rank).
    pub step_clocks: Vec<(SideKind, usize, Vec<f64>)>,
}

struct K<'a> {
    cfg: &'a PlatformConfig,
    p: &'a SimParams,
}

impl K<'_> {
    fn lat(&self, k: NodeKind) -> f64 {
        match k {
            NodeKind::Cluster => self.cfg.cluster.mpi_latency,
            NodeKind::Booster => self.cfg.booster.mpi_latency,
        }
    }

    fn cc(&self, bytes: usize, a: NodeKind, b: NodeKind) -> f64 {
        self.lat(a).max(self.lat(b)) + bytes as f64 / self.cfg.interconnect.link_bandwidth
    }

    fn field_speed(&self, k: NodeKind) -> f64 {
        match k {
            NodeKind::Cluster => self.cfg.cluster.speed_factor_field,
            NodeKind::Booster => self.cfg.booster.speed_factor_field,
        }
    }

    fn particle_speed(&self, k: NodeKind) -> f64 {
        match k {
            NodeKind::Cluster => self.cfg.cluster.speed_factor_particle,
            NodeKind::Booster => self.cfg.booster.speed_factor_particle,
        }
    }
}

fn rounds(n: usize) -> f64 {
    let mut r = 0;
    while (1usize << r) < n {
        r += 1;
    }
    r as f64
}

fn rows(ny: usize, n: usize, i: usize) -> usize {
    let base = ny / n;
    if i + 1 == n {
        ny - base * (n - 1)
    } else {
        base
    }
}

/// One world of `n` ranks of one node kind.
struct World<'a> {
    k: &'a K<'a>,
    kind: NodeKind,
    t: Vec<f64>,
}

impl World<'_> {
    fn n(&self) -> usize {
        self.t.len()
    }

    fn sync(&mut self, hop_bytes: usize) {
        let n = self.n();
        if n == 1 {
            return;
        }
        let top = self.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = top + 2.0 * rounds(n) * self.k.cc(hop_bytes, self.kind, self.kind);
        self.t.iter_mut().for_each(|c| *c = v);
    }

    fn allreduce(&mut self) {
        self.sync(8);
    }

    fn barrier(&mut self) {
        self.sync(0);
    }

    /// Neighbour exchange: every rank posts `sends` (offset, bytes), then
    /// receives the matching messages from `offset` ranks the other way in
    /// the order of `recvs` (index into `sends` as seen by the sender).
    fn ring(&mut self, sends: &[(isize, usize)], recvs: &[usize]) {
        let n = self.n();
        if n == 1 {
            return;
        }
        let cost = |b| self.k.cc(b, self.kind, self.kind);
        let mut st = vec![vec![0.0; sends.len()]; n];
        for i in 0..n {
            for (s, &(_, b)) in sends.iter().enumerate() {
                st[i][s] = self.t[i];
                self.t[i] += cost(b);
            }
        }
        for i in 0..n {
            for &s in recvs {
                let (off, b) = sends[s];
                let src = (i as isize - off).rem_euclid(n as isize) as usize;
                self.t[i] = self.t[i].max(st[src][s]) + cost(b);
            }
        }
    }

    fn compute(&mut self, i: usize, seconds: f64) {
        self.t[i] += seconds;
    }

    fn halo(&mut self) {
        let b = 8 * self.k.p.cells_x;
        // down to prev, up to next; take the up message from prev, then down from next
        self.ring(&[(-1, b), (1, b)], &[1, 0]);
    }
}

fn check_counts(logs: &[&RankLog]) {
    for w in logs.windows(2) {
        for (a, b) in w[0].records.iter().zip(&w[1].records) {
            assert_eq!(a.migration_rounds, b.migration_rounds, "migration rounds differ across ranks");
            let (ca, cb) = (a.cg.map(|c| (c.iters, c.checks)), b.cg.map(|c| (c.iters, c.checks)));
            assert_eq!(ca, cb, "CG counts differ across ranks");
        }
    }
}

fn particle_half(w: &mut World, logs: &[&RankLog], step: usize) {
    let k = w.k;
    let nx = k.p.cells_x;
    if step > 0 {
        w.ring(&[(-1, 16 * nx)], &[0]);
        for (i, l) in logs.iter().enumerate() {
            let n = l.records[step].n_pushed as f64;
            w.compute(i, k.cfg.workload.particle_work_per_particle * n / k.particle_speed(w.kind));
        }
        let mig = 8 + 40 * k.p.migration_capacity;
        for _ in 0..logs[0].records[step].migration_rounds {
            w.ring(&[(1, mig), (-1, mig)], &[0, 1]);
            w.allreduce();
        }
    }
    w.ring(&[(1, 32 * nx)], &[0]);
}

fn particle_compute(k: &K, l: &RankLog, step: usize, kind: NodeKind) -> f64 {
    k.cfg.workload.particle_work_per_particle * l.records[step].n_pushed as f64 / k.particle_speed(kind)
}

fn kinetic(w: &mut World, logs: &[&RankLog], step: usize) {
    let k = w.k;
    for (i, l) in logs.iter().enumerate() {
        let n = l.records[step].n_deposited as f64;
        w.compute(i, k.cfg.workload.kinetic_work_per_particle * n / k.particle_speed(w.kind));
    }
    w.allreduce();
}

fn field_compute(k: &K, n: usize, i: usize, iters: usize, kind: NodeKind) -> f64 {
    let cells = (k.p.cells_x * rows(k.p.cells_y, n, i)) as f64;
    k.cfg.workload.field_work_per_cell_iter * cells * iters as f64 / k.field_speed(kind)
}

fn solve(w: &mut World, logs: &[&RankLog], step: usize) {
    let k = w.k;
    let n = w.n();
    let cg = logs[0].records[step].cg.expect("field ranks record CG stats");
    w.allreduce();
    w.allreduce();
    if cg.rhs_norm != 0.0 {
        // every block below starts right after a reduction, so the order of
        // blocks does not change the total
        for _ in 0..cg.checks {
            w.halo();
            w.allreduce();
        }
        for _ in 0..cg.iters {
            w.halo();
            for i in 0..n {
                w.compute(i, field_compute(k, n, i, 1, w.kind));
            }
            w.allreduce();
            w.allreduce();
        }
        for _ in 1..cg.checks {
            w.allreduce();
        }
    }
    w.halo();
}

fn field_diag(w: &mut World, step: usize) {
    let k = w.k;
    let n = w.n();
    let (nx, ny) = (k.p.cells_x, k.p.cells_y);
    for i in 0..n {
        let cells = (nx * rows(ny, n, i)) as f64;
        w.compute(i, k.cfg.workload.field_energy_work_per_cell * cells / k.field_speed(w.kind));
    }
    w.allreduce();
    if step % k.p.output_every == 0 {
        let cost = |b| k.cc(b, w.kind, w.kind);
        let mut st = vec![0.0; n];
        for i in 1..n {
            st[i] = w.t[i];
            w.t[i] += cost(8 * nx * rows(ny, n, i));
        }
        for i in 1..n {
            w.t[0] = w.t[0].max(st[i]) + cost(8 * nx * rows(ny, n, i));
        }
        w.t[0] += 8.0 * (nx * ny) as f64 / k.cfg.workload.output_bandwidth;
        w.barrier();
    }
}

fn side_logs(r: &RunReport, side: SideKind) -> Vec<&RankLog> {
    let mut v: Vec<&RankLog> = r.logs.iter().filter(|l| l.side == side).collect();
    v.sort_by_key(|l| l.rank);
    v
}

pub fn replay(r: &RunReport, cfg: &PlatformConfig) -> Replay {
    let p = &r.scenario.params;
    let k = K { cfg, p };
    let n = r.scenario.nodes;
    let steps = p.steps + 1;
    match r.scenario.mode {
        Mode::Cluster | Mode::Booster => {
            let kind = if r.scenario.mode == Mode::Cluster {
                NodeKind::Cluster
            } else {
                NodeKind::Booster
            };
            let logs = side_logs(r, SideKind::Monolithic);
            assert_eq!(logs.len(), n);
            check_counts(&logs);
            let mut w = World {
                k: &k,
                kind,
                t: vec![0.0; n],
            };
            let mut clocks = vec![Vec::new(); n];
            for s in 0..steps {
                particle_half(&mut w, &logs, s);
                kinetic(&mut w, &logs, s);
                solve(&mut w, &logs, s);
                field_diag(&mut w, s);
                for i in 0..n {
                    clocks[i].push(w.t[i]);
                }
            }
            w.barrier();
            Replay {
                makespan: w.t.iter().cloned().fold(0.0, f64::max),
                step_clocks: clocks
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| (SideKind::Monolithic, i, c))
                    .collect(),
            }
        }
        Mode::Cb => {
            let bl = side_logs(r, SideKind::Booster);
            let cl = side_logs(r, SideKind::Cluster);
            assert_eq!((bl.len(), cl.len()), (n, n));
            check_counts(&bl);
            check_counts(&cl);
            let mut b = World {
                k: &k,
                kind: NodeKind::Booster,
                t: vec![0.0; n],
            };
            let mut c = World {
                k: &k,
                kind: NodeKind::Cluster,
                t: vec![0.0; n],
            };
            let nx = p.cells_x;
            let phi = cfg.comm_overhead_fraction;
            let mut bclk = vec![Vec::new(); n];
            let mut cclk = vec![Vec::new(); n];
            for s in 0..steps {
                particle_half(&mut b, &bl, s);
                let mut m_done = vec![0.0; n];
                for i in 0..n {
                    let bytes = HEADER + 32 * nx * rows(p.cells_y, n, i);
                    let wire = k.cc(bytes, NodeKind::Booster, NodeKind::Cluster);
                    let comp = if s == 0 { 0.0 } else { particle_compute(&k, bl[i], s, NodeKind::Booster) };
                    b.t[i] += (phi * comp - wire).max(0.0);
                    m_done[i] = b.t[i] + wire;
                }
                kinetic(&mut b, &bl, s);

                for i in 0..n {
                    c.t[i] = c.t[i].max(m_done[i]);
                }
                solve(&mut c, &cl, s);
                let mut f_done = vec![0.0; n];
                let iters = cl[0].records[s].cg.map_or(0, |g| g.iters);
                for i in 0..n {
                    let bytes = HEADER + 8 * (2 * nx * rows(p.cells_y, n, i) + 3);
                    let wire = k.cc(bytes, NodeKind::Cluster, NodeKind::Booster);
                    let comp = field_compute(&k, n, i, iters, NodeKind::Cluster);
                    c.t[i] += (phi * comp - wire).max(0.0);
                    f_done[i] = c.t[i] + wire;
                }
                field_diag(&mut c, s);
                for i in 0..n {
                    c.t[i] = c.t[i].max(f_done[i]);
                    b.t[i] = b.t[i].max(m_done[i]).max(f_done[i]);
                    bclk[i].push(b.t[i]);
                    cclk[i].push(c.t[i]);
                }
            }
            b.barrier();
            c.barrier();
            let top = b.t.iter().chain(&c.t).cloned().fold(0.0, f64::max);
            let mut step_clocks: Vec<_> = bclk
                .into_iter()
                .enumerate()
                .map(|(i, v)| (SideKind::Booster, i, v))
                .collect();
            step_clocks.extend(cclk.into_iter().enumerate().map(|(i, v)| (SideKind::Cluster, i, v)));
            Replay {
                makespan: top,
                step_clocks,
            }
        }
    }
}

/// Largest difference between the oracle and the run, over the makespan and
/// every recorded step-end clock.
pub fn replay_error(r: &RunReport, cfg: &PlatformConfig) -> f64 {
    let o = replay(r, cfg);
    let mut worst = (o.makespan - r.total).abs();
    for (side, rank, clocks) in &o.step_clocks {
        let log = r.log(*side, *rank).expect("log for every rank");
        for (rec, c) in log.records.iter().zip(clocks) {
            worst = worst.max((rec.clock - c).abs());
        }
    }
    worst
}
