//! Running the mini-app directly on a runtime and flattening its output.

use cbemu::modsched::Allocation;
use cbemu::mprt::Runtime;
use cbemu::xpic::{register_roles, RankLog, SideKind, SimParams, XpicJob, XpicOptions, ROLE_BOOSTER, ROLE_MONO};
use cbemu::{Exec, NodeKind, PlatformConfig};

fn collect(rt: &Runtime, role: &str, n: usize, kind: NodeKind, alloc: &Allocation) -> Vec<RankLog> {
    let mut out = rt.launch(role, n, kind, alloc).expect("run succeeds");
    let ids: Vec<_> = out.outputs.keys().copied().collect();
    ids.into_iter().filter_map(|id| out.take::<RankLog>(id)).collect()
}

fn job(p: &SimParams, cluster_ranks: usize) -> XpicJob {
    XpicJob::new(
        p.clone(),
        cluster_ranks,
        XpicOptions {
            exec: Exec::Parallel,
            capture: true,
        },
    )
}

/// Both solvers on `ranks` Cluster ranks.
pub fn run_mono(p: &SimParams, ranks: usize) -> Vec<RankLog> {
    let mut rt = Runtime::new(PlatformConfig::default());
    register_roles(&mut rt, job(p, ranks));
    collect(&rt, ROLE_MONO, ranks, NodeKind::Cluster, &Allocation::unmanaged(ranks, 0))
}

/// Particle solver on `b` Booster ranks, field solver on `c` Cluster ranks.
pub fn run_split(p: &SimParams, c: usize, b: usize) -> Vec<RankLog> {
    let mut rt = Runtime::new(PlatformConfig::default());
    register_roles(&mut rt, job(p, c));
    collect(&rt, ROLE_BOOSTER, b, NodeKind::Booster, &Allocation::unmanaged(c, b))
}

pub fn side<'a>(logs: &'a [RankLog], s: SideKind) -> Vec<&'a RankLog> {
    let mut v: Vec<&RankLog> = logs.iter().filter(|l| l.side == s).collect();
    v.sort_by_key(|l| l.rank);
    v
}

/// Whole-grid state of one step, ranks concatenated in order.
#[derive(Debug, Default, PartialEq)]
pub struct Global {
    pub phi: Vec<u64>,
    pub ex: Vec<u64>,
    pub ey: Vec<u64>,
    pub rho: Vec<u64>,
    pub particles: Vec<[u64; 5]>,
    pub kinetic: u64,
    pub field_energy: u64,
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Per-step global state, fields taken from `fields` ranks and particles
/// from `parts` ranks.
pub fn global_states(fields: &[&RankLog], parts: &[&RankLog]) -> Vec<Global> {
    let steps = fields[0].snapshots.len();
    (0..steps)
        .map(|s| {
            let mut g = Global::default();
            for l in fields {
                let snap = &l.snapshots[s];
                g.phi.extend(bits(&snap.phi));
                g.ex.extend(bits(&snap.ex));
                g.ey.extend(bits(&snap.ey));
                g.rho.extend(bits(&snap.rho));
            }
            for l in parts {
                g.particles.extend(l.snapshots[s].particles.iter().map(|q| {
                    [q.x.to_bits(), q.y.to_bits(), q.vx.to_bits(), q.vy.to_bits(), q.vz.to_bits()]
                }));
            }
            g.kinetic = parts[0].records[s].kinetic.unwrap().to_bits();
            g.field_energy = fields[0].records[s].field_energy.unwrap().to_bits();
            g
        })
        .collect()
}

/// Worst relative charge error over every step of a run:
/// |Σρ·area − N·q| / |N·q| with N the particles held after deposition.
pub fn charge_error(p: &SimParams, parts: &[&RankLog]) -> f64 {
    let steps = parts[0].records.len();
    let mut worst: f64 = 0.0;
    for s in 0..steps {
        let total: f64 = parts.iter().map(|l| l.records[s].charge_local.unwrap()).sum();
        let n: usize = parts.iter().map(|l| l.records[s].n_deposited).sum();
        let want = n as f64 * p.charge;
        worst = worst.max((total - want).abs() / want.abs());
    }
    worst
}
