//! Main loops of the three application roles.
//!
//! Step 0 deposits the initial particles and solves for the initial fields.
//! Each later step pushes the particles in the previous fields, gathers their
//! moments and solves again. Diagnostics (energies, field output) follow each
//! half; in split mode they overlap the inter-module transfers.

use std::sync::Arc;

use crate::exec::Exec;
use crate::mprt::{Communicator, InterComm, Process, ReduceOp, Runtime};
use crate::platform::{NodeKind, Solver};

use super::buffer::{get_f64s, put_f64s};
use super::exchange::{
    assemble_fields, assemble_moments, booster_to_cluster, cluster_to_booster, expect,
};
use super::grid::{Decomp, FieldBlock, Moments};
use super::params::SimParams;
use super::particles::{row_of, EView, Particle, ParticleSet};
use super::poisson::{self, SolveStats};
use super::{tags, XpicError};

pub const ROLE_MONO: &str = "xpic.monolithic";
pub const ROLE_CLUSTER: &str = "xpic.cluster";
pub const ROLE_BOOSTER: &str = "xpic.booster";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct XpicOptions {
    pub exec: Exec,
    /// Keep per-step copies of fields, moments and particles.
    pub capture: bool,
}

type HookFn = dyn Fn(&mut Process, usize, usize, &ParticleSet) -> Result<(), XpicError> + Send + Sync;

/// Called on every particle-side rank after the kinetic energy reduction of
/// each step, with (process, step, rank, particles). All ranks of the side
/// leave that reduction with the same clock.
#[derive(Clone)]
pub struct StepHook(pub Arc<HookFn>);

impl std::fmt::Debug for StepHook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("StepHook")
    }
}

#[derive(Clone, Debug)]
pub struct XpicJob {
    pub params: SimParams,
    /// Field-solver ranks the Booster role spawns.
    pub cluster_ranks: usize,
    pub opts: XpicOptions,
    pub hook: Option<StepHook>,
}

impl XpicJob {
    pub fn new(params: SimParams, cluster_ranks: usize, opts: XpicOptions) -> Self {
        XpicJob {
            params,
            cluster_ranks,
            opts,
            hook: None,
        }
    }

    fn after_kinetic(&self, p: &mut Process, step: usize, rank: usize, parts: &ParticleSet) -> Result<(), XpicError> {
        match &self.hook {
            Some(h) => (h.0)(p, step, rank, parts),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideKind {
    Monolithic,
    Cluster,
    Booster,
}

/// What one rank did in one step. Times are virtual seconds on this rank.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub kinetic: Option<f64>,
    pub field_energy: Option<f64>,
    pub cg: Option<SolveStats>,
    /// Particles held when the push started.
    pub n_pushed: usize,
    /// Particles held when moments were gathered.
    pub n_deposited: usize,
    pub migration_rounds: usize,
    pub impulse: [f64; 2],
    pub momentum_before: [f64; 3],
    pub momentum_after: [f64; 3],
    /// Σ ρ·cell_area over this rank's rows after ghost folding.
    pub charge_local: Option<f64>,
    /// Compute cost of this rank's solver work in the step.
    pub compute_field: f64,
    pub compute_particle: f64,
    /// Field solve and E computation.
    pub t_field_solve: f64,
    /// Push, migration and moment gathering.
    pub t_particle_solve: f64,
    /// Field energy and output.
    pub t_field_diag: f64,
    /// Kinetic energy.
    pub t_particle_diag: f64,
    /// Charged inter-module transfer cost of this rank's outgoing buffer.
    pub exchange_cost: f64,
    /// Clock at the end of the step.
    pub clock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub phi: Vec<f64>,
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub rho: Vec<f64>,
    pub particles: Vec<Particle>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankLog {
    pub side: SideKind,
    pub rank: usize,
    pub node_kind: NodeKind,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_clock: f64,
}

fn encode(v: &[f64]) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 * v.len());
    put_f64s(&mut b, v);
    b
}

struct ParticleSide {
    params: SimParams,
    d: Decomp,
    rank: usize,
    parts: ParticleSet,
    ex: Vec<f64>,
    ey: Vec<f64>,
    b: [f64; 3],
    exec: Exec,
}

impl ParticleSide {
    fn new(params: &SimParams, d: Decomp, rank: usize, exec: Exec) -> Self {
        let n = d.nx * d.row_count(rank);
        ParticleSide {
            params: params.clone(),
            d,
            rank,
            parts: ParticleSet::init(params, &d, rank),
            ex: vec![0.0; n],
            ey: vec![0.0; n],
            b: params.b0,
            exec,
        }
    }

    /// First E row of the next rank.
    fn e_ghost(&self, p: &mut Process, comm: &Communicator) -> Result<(Vec<f64>, Vec<f64>), XpicError> {
        let nx = self.d.nx;
        if self.d.ranks == 1 {
            return Ok((self.ex[..nx].to_vec(), self.ey[..nx].to_vec()));
        }
        let mut first = self.ex[..nx].to_vec();
        first.extend_from_slice(&self.ey[..nx]);
        p.send(comm, self.d.prev(self.rank), tags::E_GHOST, encode(&first))?;
        let got = get_f64s(&p.recv(comm, self.d.next(self.rank), tags::E_GHOST)?);
        Ok((got[..nx].to_vec(), got[nx..].to_vec()))
    }

    /// Push, migrate and deposit. Returns folded moments.
    fn advance(
        &mut self,
        p: &mut Process,
        comm: &Communicator,
        rec: &mut StepRecord,
    ) -> Result<Moments, XpicError> {
        let (gx, gy) = self.e_ghost(p, comm)?;
        let (r0, r1) = self.d.rows(self.rank);
        let view = EView {
            nx: self.d.nx,
            ny: self.d.ny,
            row_start: r0,
            rows: r1 - r0,
            ex: &self.ex,
            ey: &self.ey,
            ghost_ex: &gx,
            ghost_ey: &gy,
            b: self.b,
        };
        rec.n_pushed = self.parts.len();
        rec.momentum_before = self.parts.momentum();
        let stats = self.parts.move_particles(&self.params, &view, self.exec);
        rec.momentum_after = self.parts.momentum();
        rec.impulse = stats.impulse;
        let work = p.config().workload.particle_work_per_particle * rec.n_pushed as f64;
        rec.compute_particle = p.compute(work, Solver::Particle);
        rec.migration_rounds = self.migrate(p, comm)?;
        self.deposit(p, comm, rec)
    }

    fn migrate(&mut self, p: &mut Process, comm: &Communicator) -> Result<usize, XpicError> {
        let d = self.d;
        if d.ranks == 1 {
            return Ok(0);
        }
        let (h, ny) = (self.params.cell_size, self.params.cells_y);
        let cap = self.params.migration_capacity;
        let me = self.rank;
        let owner = |q: &Particle| d.owner(row_of(q.y, h, ny));
        let mut rounds = 0;
        loop {
            rounds += 1;
            let mut up = Vec::new();
            let mut down = Vec::new();
            let mut keep = Vec::with_capacity(self.parts.len());
            for q in self.parts.parts.drain(..) {
                let o = owner(&q);
                if o == me {
                    keep.push(q);
                    continue;
                }
                let dist_up = (o + d.ranks - me) % d.ranks;
                let dist_down = (me + d.ranks - o) % d.ranks;
                let out = if dist_up <= dist_down { &mut up } else { &mut down };
                if out.len() < cap {
                    out.push(q);
                } else {
                    keep.push(q);
                }
            }
            self.parts.parts = keep;
            p.send(comm, d.next(me), tags::MIG_UP, pack_particles(&up, cap))?;
            p.send(comm, d.prev(me), tags::MIG_DOWN, pack_particles(&down, cap))?;
            let from_below = unpack_particles(&p.recv(comm, d.prev(me), tags::MIG_UP)?);
            let from_above = unpack_particles(&p.recv(comm, d.next(me), tags::MIG_DOWN)?);
            self.parts.parts.extend(from_below);
            self.parts.parts.extend(from_above);
            let stray = self.parts.parts.iter().filter(|q| owner(q) != me).count();
            let worst = p.allreduce_scalar(comm, ReduceOp::Max, stray as f64)?;
            if worst == 0.0 {
                return Ok(rounds);
            }
        }
    }

    /// Gather moments and fold the ghost row into the next rank's first row.
    fn deposit(
        &self,
        p: &mut Process,
        comm: &Communicator,
        rec: &mut StepRecord,
    ) -> Result<Moments, XpicError> {
        let (r0, r1) = self.d.rows(self.rank);
        let rows = r1 - r0;
        let nx = self.d.nx;
        let mut m = self.parts.gather_moments(&self.params, r0, rows);
        rec.n_deposited = self.parts.len();
        let ghost: Vec<f64> = m
            .planes()
            .iter()
            .flat_map(|pl| pl[rows * nx..].iter().copied())
            .collect();
        let incoming = if self.d.ranks == 1 {
            ghost
        } else {
            p.send(comm, self.d.next(self.rank), tags::RHO_GHOST, encode(&ghost))?;
            get_f64s(&p.recv(comm, self.d.prev(self.rank), tags::RHO_GHOST)?)
        };
        for (k, plane) in m.planes_mut().into_iter().enumerate() {
            plane.truncate(rows * nx);
            for i in 0..nx {
                plane[i] += incoming[k * nx + i];
            }
        }
        m.rows = rows;
        rec.charge_local = Some(m.total_charge(self.params.cell_area()));
        Ok(m)
    }

    fn kinetic_diag(&self, p: &mut Process, comm: &Communicator) -> Result<f64, XpicError> {
        let work = p.config().workload.kinetic_work_per_particle * self.parts.len() as f64;
        p.compute(work, Solver::Particle);
        let local = self.parts.kinetic_energy(self.exec);
        Ok(p.allreduce_scalar(comm, ReduceOp::Sum, local)?)
    }
}

fn pack_particles(v: &[Particle], cap: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 + 40 * cap);
    b.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for q in v {
        put_f64s(&mut b, &[q.x, q.y, q.vx, q.vy, q.vz]);
    }
    b.resize(8 + 40 * cap, 0);
    b
}

fn unpack_particles(b: &[u8]) -> Vec<Particle> {
    let n = u64::from_le_bytes(b[..8].try_into().unwrap()) as usize;
    get_f64s(&b[8..8 + 40 * n])
        .chunks_exact(5)
        .map(|c| Particle {
            x: c[0],
            y: c[1],
            vx: c[2],
            vy: c[3],
            vz: c[4],
        })
        .collect()
}

struct FieldSide {
    params: SimParams,
    d: Decomp,
    rank: usize,
    f: FieldBlock,
}

impl FieldSide {
    fn new(params: &SimParams, d: Decomp, rank: usize) -> Self {
        let (r0, r1) = d.rows(rank);
        FieldSide {
            params: params.clone(),
            d,
            rank,
            f: FieldBlock::zeros(d.nx, r0, r1 - r0, params.b0),
        }
    }

    fn solve(
        &mut self,
        p: &mut Process,
        comm: &Communicator,
        rho: &[f64],
        rec: &mut StepRecord,
    ) -> Result<(), XpicError> {
        let stats = poisson::solve(p, comm, &self.d, self.rank, &self.params, rho, &mut self.f.phi)?;
        poisson::calculate_e(p, comm, &self.d, self.rank, &self.params, &mut self.f)?;
        self.f.calculate_b();
        let cells = (self.d.nx * self.f.rows) as f64;
        let work = p.config().workload.field_work_per_cell_iter * cells * stats.iters as f64;
        rec.compute_field = p.config().compute_cost(work, p.rank().node_kind, Solver::Field);
        rec.cg = Some(stats);
        Ok(())
    }

    fn field_diag(&self, p: &mut Process, comm: &Communicator, step: usize) -> Result<f64, XpicError> {
        let cells = self.d.nx * self.f.rows;
        let work = p.config().workload.field_energy_work_per_cell * cells as f64;
        p.compute(work, Solver::Field);
        let local = poisson::field_energy_local(&self.f, self.params.cell_area());
        let fe = p.allreduce_scalar(comm, ReduceOp::Sum, local)?;
        if step % self.params.output_every == 0 {
            self.write_output(p, comm)?;
        }
        Ok(fe)
    }

    /// Gather phi on rank 0, which writes it to the global store.
    fn write_output(&self, p: &mut Process, comm: &Communicator) -> Result<(), XpicError> {
        if self.rank == 0 {
            for src in 1..self.d.ranks {
                p.recv(comm, src, tags::OUTPUT)?;
            }
            let bytes = 8.0 * (self.d.nx * self.d.ny) as f64;
            let bw = p.config().workload.output_bandwidth;
            p.advance(bytes / bw);
        } else {
            p.send(comm, 0, tags::OUTPUT, encode(&self.f.phi))?;
        }
        p.barrier(comm)?;
        Ok(())
    }
}

/// Charge the exchange of one buffer: the transfer plus whatever brings it up
/// to the configured share of the step's solver compute.
fn exchange_surcharge(p: &mut Process, compute: f64, bytes: usize, dst: NodeKind) -> f64 {
    let wire = p.config().comm_cost(bytes, p.rank().node_kind, dst);
    let floor = p.config().comm_overhead_fraction * compute;
    p.advance((floor - wire).max(0.0));
    wire.max(floor)
}

fn largest_piece(mine: &Decomp, theirs: &Decomp, rank: usize, bytes_per_row: usize, extra: usize) -> usize {
    mine.overlaps(rank, theirs)
        .iter()
        .map(|(_, lo, hi)| (hi - lo) * bytes_per_row + extra)
        .max()
        .unwrap_or(0)
}

fn snapshot(step: usize, f: Option<&FieldBlock>, rho: &[f64], parts: Option<&ParticleSet>) -> Snapshot {
    Snapshot {
        step,
        phi: f.map(|f| f.phi.clone()).unwrap_or_default(),
        ex: f.map(|f| f.ex.clone()).unwrap_or_default(),
        ey: f.map(|f| f.ey.clone()).unwrap_or_default(),
        rho: rho.to_vec(),
        particles: parts.map(|s| s.parts.clone()).unwrap_or_default(),
    }
}

fn my_rank(comm: &Communicator) -> usize {
    comm.rank().expect("caller belongs to its world")
}

/// Both solvers on one world, one after the other.
pub fn run_monolithic(p: &mut Process, job: &XpicJob) -> Result<RankLog, XpicError> {
    let params = &job.params;
    params.validate()?;
    let comm = p.world().clone();
    let rank = my_rank(&comm);
    let d = Decomp::new(params.cells_x, params.cells_y, comm.size())?;
    let mut ps = ParticleSide::new(params, d, rank, job.opts.exec);
    let mut fs = FieldSide::new(params, d, rank);
    let mut log = RankLog {
        side: SideKind::Monolithic,
        rank,
        node_kind: p.rank().node_kind,
        records: Vec::new(),
        snapshots: Vec::new(),
        final_clock: 0.0,
    };
    for step in 0..=params.steps {
        let mut rec = StepRecord {
            step,
            ..Default::default()
        };
        let t0 = p.clock();
        let m = if step == 0 {
            ps.deposit(p, &comm, &mut rec)?
        } else {
            ps.advance(p, &comm, &mut rec)?
        };
        let t1 = p.clock();
        rec.kinetic = Some(ps.kinetic_diag(p, &comm)?);
        job.after_kinetic(p, step, rank, &ps.parts)?;
        let t2 = p.clock();
        fs.solve(p, &comm, &m.rho, &mut rec)?;
        ps.ex.copy_from_slice(&fs.f.ex);
        ps.ey.copy_from_slice(&fs.f.ey);
        ps.b = fs.f.b;
        let t3 = p.clock();
        rec.field_energy = Some(fs.field_diag(p, &comm, step)?);
        let t4 = p.clock();
        rec.t_particle_solve = t1 - t0;
        rec.t_particle_diag = t2 - t1;
        rec.t_field_solve = t3 - t2;
        rec.t_field_diag = t4 - t3;
        rec.clock = t4;
        if job.opts.capture {
            log.snapshots
                .push(snapshot(step, Some(&fs.f), &m.rho, Some(&ps.parts)));
        }
        log.records.push(rec);
    }
    p.barrier(&comm)?;
    log.final_clock = p.clock();
    Ok(log)
}

/// Particle solver. Spawns the field solver on the Cluster first.
pub fn run_booster_role(p: &mut Process, job: &XpicJob) -> Result<RankLog, XpicError> {
    let params = &job.params;
    params.validate()?;
    let comm = p.world().clone();
    let rank = my_rank(&comm);
    let alloc = p.allocation().clone();
    let inter = p.spawn(&comm, ROLE_CLUSTER, job.cluster_ranks, NodeKind::Cluster, &alloc)?;
    let mine = Decomp::new(params.cells_x, params.cells_y, comm.size())?;
    let theirs = Decomp::new(params.cells_x, params.cells_y, inter.remote_size())?;
    let mut ps = ParticleSide::new(params, mine, rank, job.opts.exec);
    let mut log = RankLog {
        side: SideKind::Booster,
        rank,
        node_kind: p.rank().node_kind,
        records: Vec::new(),
        snapshots: Vec::new(),
        final_clock: 0.0,
    };
    for step in 0..=params.steps {
        let mut rec = StepRecord {
            step,
            ..Default::default()
        };
        let t0 = p.clock();
        let m = if step == 0 {
            ps.deposit(p, &comm, &mut rec)?
        } else {
            ps.advance(p, &comm, &mut rec)?
        };
        let t1 = p.clock();
        let bytes = largest_piece(&mine, &theirs, rank, 32 * mine.nx, super::buffer::HEADER_BYTES);
        rec.exchange_cost = exchange_surcharge(p, rec.compute_particle, bytes, NodeKind::Cluster);
        let mut reqs = booster_to_cluster(p, &inter, &mine, &theirs, rank, &m)?;
        let n_send = reqs.len();
        reqs.extend(expect(p, &inter, &mine, &theirs, rank, tags::FIELDS)?);
        let t2 = p.clock();
        rec.kinetic = Some(ps.kinetic_diag(p, &comm)?);
        job.after_kinetic(p, step, rank, &ps.parts)?;
        rec.t_particle_diag = p.clock() - t2;
        let got = p.wait_all(&reqs)?;
        let payloads: Vec<Vec<u8>> = got.into_iter().skip(n_send).flatten().collect();
        let mut fb = FieldBlock::zeros(mine.nx, m.row_start, m.rows, ps.b);
        assemble_fields(payloads, &mine, rank, &mut fb)?;
        ps.ex = fb.ex;
        ps.ey = fb.ey;
        ps.b = fb.b;
        rec.t_particle_solve = t1 - t0;
        rec.clock = p.clock();
        if job.opts.capture {
            log.snapshots.push(snapshot(step, None, &m.rho, Some(&ps.parts)));
        }
        log.records.push(rec);
    }
    p.barrier(&comm)?;
    log.final_clock = p.clock();
    Ok(log)
}

/// Field solver, started by the Booster's spawn.
pub fn run_cluster_role(p: &mut Process, job: &XpicJob) -> Result<RankLog, XpicError> {
    let params = &job.params;
    let inter: InterComm = p.get_parent().cloned().ok_or(XpicError::NoParent)?;
    let comm = p.world().clone();
    let rank = my_rank(&comm);
    let mine = Decomp::new(params.cells_x, params.cells_y, comm.size())?;
    let theirs = Decomp::new(params.cells_x, params.cells_y, inter.remote_size())?;
    let mut fs = FieldSide::new(params, mine, rank);
    let mut log = RankLog {
        side: SideKind::Cluster,
        rank,
        node_kind: p.rank().node_kind,
        records: Vec::new(),
        snapshots: Vec::new(),
        final_clock: 0.0,
    };
    for step in 0..=params.steps {
        let mut rec = StepRecord {
            step,
            ..Default::default()
        };
        let reqs = expect(p, &inter, &mine, &theirs, rank, tags::MOMENTS)?;
        let payloads: Vec<Vec<u8>> = p.wait_all(&reqs)?.into_iter().flatten().collect();
        let m = assemble_moments(payloads, &mine, rank)?;
        let t0 = p.clock();
        fs.solve(p, &comm, &m.rho, &mut rec)?;
        let t1 = p.clock();
        let bytes = largest_piece(&mine, &theirs, rank, 16 * mine.nx, super::buffer::HEADER_BYTES + 24);
        rec.exchange_cost = exchange_surcharge(p, rec.compute_field, bytes, NodeKind::Booster);
        let sends = cluster_to_booster(p, &inter, &mine, &theirs, rank, &fs.f)?;
        let t2 = p.clock();
        rec.field_energy = Some(fs.field_diag(p, &comm, step)?);
        rec.t_field_diag = p.clock() - t2;
        p.wait_all(&sends)?;
        rec.t_field_solve = t1 - t0;
        rec.clock = p.clock();
        if job.opts.capture {
            log.snapshots.push(snapshot(step, Some(&fs.f), &m.rho, None));
        }
        log.records.push(rec);
    }
    p.barrier(&comm)?;
    log.final_clock = p.clock();
    Ok(log)
}

/// Register the three roles for `job` on `rt`.
pub fn register_roles(rt: &mut Runtime, job: XpicJob) {
    let j = job.clone();
    rt.register(ROLE_MONO, move |p| Ok(Box::new(run_monolithic(p, &j)?)));
    let j = job.clone();
    rt.register(ROLE_BOOSTER, move |p| Ok(Box::new(run_booster_role(p, &j)?)));
    rt.register(ROLE_CLUSTER, move |p| Ok(Box::new(run_cluster_role(p, &job)?)));
}
