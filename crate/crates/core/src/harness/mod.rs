//! Benchmark scenarios: each runs the mini-app on the Cluster alone, the
//! Booster alone, or split across both, and reports virtual times.

mod checkpoint;
mod run;
mod scaling;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckpt::{CheckpointLevel, CkptError};
use crate::modsched::SchedError;
use crate::mprt::RunError;
use crate::xpic::{SimParams, XpicError};

pub use checkpoint::{decode_particles, encode_particles};
pub use run::{run_scenario, RunOptions, RunReport};
pub use scaling::{
    emit_results, speedup_table, weak_scaling, ScalingRow, ScalingTable, SpeedupRow, WeakScaling,
    CSV_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cluster,
    Booster,
    Cb,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Cluster, Mode::Booster, Mode::Cb];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cluster => "cluster",
            Mode::Booster => "booster",
            Mode::Cb => "cb",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cluster" => Ok(Mode::Cluster),
            "booster" => Ok(Mode::Booster),
            "cb" => Ok(Mode::Cb),
            _ => Err(format!("unknown mode '{s}' (cluster, booster, cb)")),
        }
    }
}

/// Periodic checkpoints of the particle state, every `interval` virtual
/// seconds, into a store rooted at `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointSpec {
    pub level: CheckpointLevel,
    pub interval: f64,
    pub root: PathBuf,
}

/// One benchmark run. In cb mode `nodes` Cluster nodes and `nodes` Booster
/// nodes are used.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub nodes: usize,
    pub params: SimParams,
    pub checkpoint: Option<CheckpointSpec>,
}

impl Scenario {
    pub fn new(mode: Mode, nodes: usize, params: SimParams) -> Self {
        Scenario {
            mode,
            nodes,
            params,
            checkpoint: None,
        }
    }

    /// Nodes requested from (Cluster, Booster).
    pub fn request(&self) -> (usize, usize) {
        match self.mode {
            Mode::Cluster => (self.nodes, 0),
            Mode::Booster => (0, self.nodes),
            Mode::Cb => (self.nodes, self.nodes),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario needs at least one node")]
    NoNodes,
    #[error("allocation failed: {0}")]
    Alloc(#[from] SchedError),
    #[error(transparent)]
    Params(#[from] XpicError),
    #[error("run failed: {0}")]
    Run(#[from] RunError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CkptError),
    #[error("{0}")]
    Counts(String),
    #[error("invalid checkpoint interval {0}")]
    Interval(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
