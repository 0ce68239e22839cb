use crate::exec::Exec;
use crate::modsched::{JobRequest, Scheduler};
use crate::mprt::{Runtime, TraceEvent};
use crate::platform::{NodeKind, PlatformConfig};
use crate::xpic::{
    register_roles, RankLog, SideKind, StepTrace, XpicJob, XpicOptions, ROLE_BOOSTER, ROLE_MONO,
};

use super::checkpoint::Checkpointer;
use super::{BenchError, Mode, Scenario};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub exec: Exec,
    /// Keep per-step snapshots of the physics state in the rank logs.
    pub capture: bool,
    /// Record every runtime operation.
    pub tracing: bool,
}

/// Virtual-time breakdown of one run. `field` and `particle` are the summed
/// per-step solver segments on rank 0 of each side (diagnostics included in
/// the sequential modes, hidden behind the exchange in cb mode); `exchange`
/// is the rest of the makespan.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: Scenario,
    /// Cluster:Booster node pairing in cb mode.
    pub pairing: &'static str,
    pub total: f64,
    pub field: f64,
    pub particle: f64,
    pub exchange: f64,
    pub field_solve: f64,
    pub particle_solve: f64,
    pub field_diag: f64,
    pub particle_diag: f64,
    /// Charged cross-module transfer time of each side (cb mode only).
    pub field_exchange: f64,
    pub particle_exchange: f64,
    pub final_kinetic: f64,
    pub final_field_energy: f64,
    pub steps: StepTrace,
    pub logs: Vec<RankLog>,
    pub events: Vec<TraceEvent>,
    /// Epochs checkpointed during the run.
    pub checkpoints: Vec<u64>,
}

impl RunReport {
    /// Exchange time relative to the field solver's own time.
    pub fn field_exchange_share(&self) -> f64 {
        self.field_exchange / self.field_solve
    }

    pub fn particle_exchange_share(&self) -> f64 {
        self.particle_exchange / self.particle_solve
    }

    pub fn log(&self, side: SideKind, rank: usize) -> Option<&RankLog> {
        self.logs.iter().find(|l| l.side == side && l.rank == rank)
    }
}

/// Allocate the scenario's nodes, run it and release them.
pub fn run_scenario(
    s: &Scenario,
    cfg: &PlatformConfig,
    opts: &RunOptions,
) -> Result<RunReport, BenchError> {
    if s.nodes == 0 {
        return Err(BenchError::NoNodes);
    }
    s.params.validate()?;
    let sched = Scheduler::for_platform(cfg);
    let (c, b) = s.request();
    let alloc = sched.allocate_now(JobRequest::new(c, b))?;

    let mut job = XpicJob::new(
        s.params.clone(),
        s.nodes,
        XpicOptions {
            exec: opts.exec,
            capture: opts.capture,
        },
    );
    let ckpt = match &s.checkpoint {
        Some(spec) => {
            if !(spec.interval > 0.0 && spec.interval.is_finite()) {
                return Err(BenchError::Interval(spec.interval));
            }
            let c = Checkpointer::new(spec.clone(), s.nodes);
            job.hook = Some(c.hook());
            Some(c)
        }
        None => None,
    };
    let mut rt = Runtime::new(cfg.clone()).with_tracing(opts.tracing);
    register_roles(&mut rt, job);
    let (role, kind) = match s.mode {
        Mode::Cluster => (ROLE_MONO, NodeKind::Cluster),
        Mode::Booster => (ROLE_MONO, NodeKind::Booster),
        Mode::Cb => (ROLE_BOOSTER, NodeKind::Booster),
    };
    let outcome = rt.launch(role, s.nodes, kind, &alloc);
    sched.release(&alloc)?;
    let mut outcome = outcome?;
    let checkpoints = match ckpt {
        Some(c) => c.finish()?,
        None => Vec::new(),
    };

    let total = outcome.makespan();
    let ids: Vec<_> = outcome.outputs.keys().copied().collect();
    let logs: Vec<RankLog> = ids
        .into_iter()
        .filter_map(|id| outcome.take::<RankLog>(id))
        .collect();
    let steps = StepTrace::from_logs(&logs);
    let field = steps.rows.iter().map(|r| r.t_field).sum::<f64>();
    let particle = steps.rows.iter().map(|r| r.t_particle).sum::<f64>();

    let find = |side| logs.iter().find(|l| l.side == side && l.rank == 0);
    let (fside, pside) = match s.mode {
        Mode::Cb => (find(SideKind::Cluster), find(SideKind::Booster)),
        _ => (find(SideKind::Monolithic), find(SideKind::Monolithic)),
    };
    let (fside, pside) = (fside.expect("field rank 0 log"), pside.expect("particle rank 0 log"));
    let sum = |l: &RankLog, f: fn(&crate::xpic::StepRecord) -> f64| l.records.iter().map(f).sum::<f64>();
    let last_p = pside.records.last().expect("step 0 always runs");
    let last_f = fside.records.last().expect("step 0 always runs");

    Ok(RunReport {
        scenario: s.clone(),
        pairing: "1:1",
        total,
        field,
        particle,
        exchange: total - field - particle,
        field_solve: sum(fside, |r| r.t_field_solve),
        particle_solve: sum(pside, |r| r.t_particle_solve),
        field_diag: sum(fside, |r| r.t_field_diag),
        particle_diag: sum(pside, |r| r.t_particle_diag),
        field_exchange: sum(fside, |r| r.exchange_cost),
        particle_exchange: sum(pside, |r| r.exchange_cost),
        final_kinetic: last_p.kinetic.unwrap_or(0.0),
        final_field_energy: last_f.field_energy.unwrap_or(0.0),
        steps,
        logs,
        events: std::mem::take(&mut outcome.trace),
        checkpoints,
    })
}
