use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::exec::Exec;
use crate::platform::PlatformConfig;
use crate::xpic::{SimParams, XpicError};

use super::run::{run_scenario, RunOptions, RunReport};
use super::{BenchError, Mode, Scenario};

pub const CSV_HEADER: &str = "mode,nodes,total_us,field_us,particle_us,exchange_us,speedup,efficiency";

/// Per-node problem of a weak-scaling sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakScaling {
    pub cells_per_node: usize,
    pub particles_per_cell: usize,
    pub steps: usize,
    pub seed: u64,
    /// Overrides the default CG tolerance.
    pub solver_tol: Option<f64>,
}

impl WeakScaling {
    pub fn params(&self, nodes: usize) -> Result<SimParams, XpicError> {
        let mut p = SimParams::weak_scaled(self.cells_per_node, nodes, self.particles_per_cell)?;
        p.steps = self.steps;
        p.seed = self.seed;
        if let Some(t) = self.solver_tol {
            p.solver_tol = t;
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub mode: Mode,
    pub nodes: usize,
    pub total: f64,
    pub field: f64,
    pub particle: f64,
    pub exchange: f64,
    /// nodes · T₁ / T_N.
    pub speedup: f64,
    /// T₁ / T_N.
    pub efficiency: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    /// Rows from reports; each mode is scaled against its own 1-node run.
    pub fn from_reports(reports: &[RunReport]) -> ScalingTable {
        let mut rows = Vec::new();
        for r in reports {
            let base = reports
                .iter()
                .find(|b| b.scenario.mode == r.scenario.mode && b.scenario.nodes == 1)
                .map_or(f64::NAN, |b| b.total);
            let efficiency = base / r.total;
            rows.push(ScalingRow {
                mode: r.scenario.mode,
                nodes: r.scenario.nodes,
                total: r.total,
                field: r.field,
                particle: r.particle,
                exchange: r.exchange,
                speedup: r.scenario.nodes as f64 * efficiency,
                efficiency,
            });
        }
        ScalingTable { rows }
    }

    pub fn get(&self, mode: Mode, nodes: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.mode == mode && r.nodes == nodes)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.9},{:.9}",
                r.mode,
                r.nodes,
                r.total * 1e6,
                r.field * 1e6,
                r.particle * 1e6,
                r.exchange * 1e6,
                r.speedup,
                r.efficiency
            )
            .unwrap();
        }
        out
    }

    /// Whitespace-separated columns: nodes, then one value per mode.
    pub fn plot_data(&self, value: fn(&ScalingRow) -> f64, fmt_prec: usize) -> String {
        let mut modes: Vec<Mode> = self.rows.iter().map(|r| r.mode).collect();
        modes.sort();
        modes.dedup();
        let mut counts: Vec<usize> = self.rows.iter().map(|r| r.nodes).collect();
        counts.sort_unstable();
        counts.dedup();
        let mut out = String::from("# nodes");
        for m in &modes {
            write!(out, " {m}").unwrap();
        }
        out.push('\n');
        for n in counts {
            write!(out, "{n}").unwrap();
            for &m in &modes {
                match self.get(m, n) {
                    Some(r) => write!(out, " {:.*}", fmt_prec, value(r)).unwrap(),
                    None => out.push_str(" nan"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Run every (mode, count) pair. Runs are independent; with a parallel
/// policy each gets its own thread.
pub fn weak_scaling(
    modes: &[Mode],
    counts: &[usize],
    w: &WeakScaling,
    cfg: &PlatformConfig,
    opts: &RunOptions,
) -> Result<(ScalingTable, Vec<RunReport>), BenchError> {
    if counts.first() != Some(&1) || counts.windows(2).any(|p| p[0] >= p[1]) {
        return Err(BenchError::Counts(format!(
            "node counts must ascend from 1, got {counts:?}"
        )));
    }
    let mut scenarios = Vec::new();
    for &m in modes {
        for &n in counts {
            scenarios.push(Scenario::new(m, n, w.params(n)?));
        }
    }
    let results: Vec<Result<RunReport, BenchError>> = match opts.exec.effective() {
        Exec::Parallel => std::thread::scope(|sc| {
            let handles: Vec<_> = scenarios
                .iter()
                .map(|s| sc.spawn(move || run_scenario(s, cfg, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scenario thread"))
                .collect()
        }),
        Exec::Sequential => scenarios.iter().map(|s| run_scenario(s, cfg, opts)).collect(),
    };
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((ScalingTable::from_reports(&reports), reports))
}

/// Ratios between modes at one node count. A ratio is `None` when either
/// run is missing.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupRow {
    pub nodes: usize,
    pub cluster_over_cb: Option<f64>,
    pub booster_over_cb: Option<f64>,
    /// Field solver on the Booster relative to the Cluster.
    pub field_booster_over_cluster: Option<f64>,
    /// Particle solver on the Cluster relative to the Booster.
    pub particle_cluster_over_booster: Option<f64>,
}

pub fn speedup_table(reports: &[RunReport]) -> Vec<SpeedupRow> {
    let mut counts: Vec<usize> = reports.iter().map(|r| r.scenario.nodes).collect();
    counts.sort_unstable();
    counts.dedup();
    counts
        .into_iter()
        .map(|n| {
            let get = |m| reports.iter().find(|r| r.scenario.mode == m && r.scenario.nodes == n);
            let ratio = |a: Option<&RunReport>, b: Option<&RunReport>, f: fn(&RunReport) -> f64| {
                Some(f(a?) / f(b?))
            };
            let (c, b, cb) = (get(Mode::Cluster), get(Mode::Booster), get(Mode::Cb));
            SpeedupRow {
                nodes: n,
                cluster_over_cb: ratio(c, cb, |r| r.total),
                booster_over_cb: ratio(b, cb, |r| r.total),
                field_booster_over_cluster: ratio(b, c, |r| r.field_solve),
                particle_cluster_over_booster: ratio(c, b, |r| r.particle_solve),
            }
        })
        .collect()
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, BenchError> {
    fs::write(&path, text).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Write `results.csv`, `runtime.dat` (µs) and `efficiency.dat` into `dir`.
pub fn emit_results(table: &ScalingTable, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(vec![
        write(dir.join("results.csv"), &table.to_csv())?,
        write(dir.join("runtime.dat"), &table.plot_data(|r| r.total * 1e6, 6))?,
        write(dir.join("efficiency.dat"), &table.plot_data(|r| r.efficiency, 9))?,
    ])
}
