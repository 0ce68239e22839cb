use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cbemu::ckpt::CheckpointLevel;
use cbemu::harness::{
    emit_results, run_scenario, speedup_table, weak_scaling, CheckpointSpec, Mode, RunOptions,
    RunReport, Scenario, ScalingTable, WeakScaling,
};
use cbemu::mprt::trace_csv;
use cbemu::{load_platform_config, Exec, PlatformConfig};

#[derive(Parser)]
#[command(name = "bench", version, about = "Cluster-Booster mini-app benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One scenario.
    Run(RunArgs),
    /// Weak scaling over several modes and node counts.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 4096)]
    cells_per_node: usize,
    #[arg(long, default_value_t = 16)]
    particles_per_cell: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative CG residual target.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Platform description (JSON); omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run particle loops on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    ckpt_level: Option<CheckpointLevel>,
    /// Virtual seconds between checkpoints.
    #[arg(long, requires = "ckpt_level")]
    ckpt_interval: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScaleArgs {
    /// `all` or a comma-separated list of cluster, booster, cb.
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    nodes: Vec<usize>,
    #[command(flatten)]
    common: Common,
}

fn platform(path: Option<&Path>) -> Result<PlatformConfig> {
    match path {
        None => Ok(PlatformConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(load_platform_config(&text)?)
        }
    }
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        exec: if c.sequential { Exec::Sequential } else { Exec::Parallel },
        capture: false,
        tracing: true,
    }
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_traces(dir: &Path, r: &RunReport) -> Result<()> {
    let tag = format!("{}_{}", r.scenario.mode, r.scenario.nodes);
    write(dir.join(format!("steps_{tag}.csv")), &r.steps.to_csv())?;
    write(dir.join(format!("events_{tag}.csv")), &trace_csv(&r.events))
}

fn summary(r: &RunReport) {
    println!(
        "{:>7} {:>2} nodes: total {:>12.3} us  field {:>12.3}  particle {:>12.3}  exchange {:>10.3}",
        r.scenario.mode,
        r.scenario.nodes,
        r.total * 1e6,
        r.field * 1e6,
        r.particle * 1e6,
        r.exchange * 1e6
    );
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = platform(a.common.config.as_deref())?;
    let w = WeakScaling {
        cells_per_node: a.common.cells_per_node,
        particles_per_cell: a.common.particles_per_cell,
        steps: a.common.steps,
        seed: a.common.seed,
        solver_tol: a.common.solver_tol,
    };
    let mut s = Scenario::new(a.mode, a.nodes, w.params(a.nodes)?);
    if let Some(level) = a.ckpt_level {
        let interval = match a.ckpt_interval {
            Some(i) => i,
            None => bail!("--ckpt-level needs --ckpt-interval"),
        };
        s.checkpoint = Some(CheckpointSpec {
            level,
            interval,
            root: a.common.out.join("ckpt"),
        });
    }
    fs::create_dir_all(&a.common.out)
        .with_context(|| format!("creating {}", a.common.out.display()))?;
    let r = run_scenario(&s, &cfg, &options(&a.common))?;
    summary(&r);
    if !r.checkpoints.is_empty() {
        println!("checkpoints at steps {:?}", r.checkpoints);
    }
    let table = ScalingTable::from_reports(std::slice::from_ref(&r));
    write(a.common.out.join("results.csv"), &table.to_csv())?;
    write_traces(&a.common.out, &r)
}

fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    if s == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    s.split(',')
        .map(|m| m.trim().parse::<Mode>().map_err(anyhow::Error::msg))
        .collect()
}

fn scale(a: ScaleArgs) -> Result<()> {
    let cfg = platform(a.common.config.as_deref())?;
    let modes = parse_modes(&a.modes)?;
    let w = WeakScaling {
        cells_per_node: a.common.cells_per_node,
        particles_per_cell: a.common.particles_per_cell,
        steps: a.common.steps,
        seed: a.common.seed,
        solver_tol: a.common.solver_tol,
    };
    let (table, reports) = weak_scaling(&modes, &a.nodes, &w, &cfg, &options(&a.common))?;
    for r in &reports {
        summary(r);
    }
    emit_results(&table, &a.common.out)?;
    let mut sp = String::from("nodes,cluster_over_cb,booster_over_cb,field_booster_over_cluster,particle_cluster_over_booster\n");
    let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.9}"));
    for row in speedup_table(&reports) {
        sp.push_str(&format!(
            "{},{},{},{},{}\n",
            row.nodes,
            f(row.cluster_over_cb),
            f(row.booster_over_cb),
            f(row.field_booster_over_cluster),
            f(row.particle_cluster_over_booster)
        ));
    }
    write(a.common.out.join("speedup.csv"), &sp)?;
    for r in &reports {
        write_traces(&a.common.out, r)?;
    }
    for row in &table.rows {
        println!("{:>7} {:>2}: speedup {:.4}  efficiency {:.4}", row.mode, row.nodes, row.speedup, row.efficiency);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Scale(a) => scale(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
