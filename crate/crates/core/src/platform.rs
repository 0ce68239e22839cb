//! The emulated machine: two node modules joined by a uniform fabric, and the
//! cost model that turns work and message sizes into virtual seconds.
//!
//! The configuration file is JSON. Units in the file follow the vendor data
//! sheets (latency in microseconds, bandwidth in bit/s); everything in memory
//! is SI (seconds, bytes/s).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kind of node a rank is placed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Cluster,
    Booster,
}

impl NodeKind {
    pub const ALL: [NodeKind; 2] = [NodeKind::Cluster, NodeKind::Booster];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Cluster => "cluster",
            NodeKind::Booster => "booster",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which half of the application a piece of work belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Solver {
    Field,
    Particle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModuleSpec {
    pub kind: NodeKind,
    pub node_count: usize,
    pub cores_per_node: usize,
    /// Relative field-solver throughput (work units per second).
    pub speed_factor_field: f64,
    /// Relative particle-solver throughput (work units per second).
    pub speed_factor_particle: f64,
    /// End-to-end MPI latency of this node kind, seconds.
    pub mpi_latency: f64,
}

impl ModuleSpec {
    pub fn deep_er_cluster() -> Self {
        ModuleSpec {
            kind: NodeKind::Cluster,
            node_count: 16,
            cores_per_node: 24,
            speed_factor_field: 1.0,
            speed_factor_particle: 1.0 / 1.35,
            mpi_latency: 1.0e-6,
        }
    }

    pub fn deep_er_booster() -> Self {
        ModuleSpec {
            kind: NodeKind::Booster,
            node_count: 8,
            cores_per_node: 64,
            speed_factor_field: 1.0 / 6.0,
            speed_factor_particle: 1.0,
            mpi_latency: 1.8e-6,
        }
    }

    pub fn speed_factor(&self, solver: Solver) -> f64 {
        match solver {
            Solver::Field => self.speed_factor_field,
            Solver::Particle => self.speed_factor_particle,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterconnectModel {
    /// Uniform link bandwidth, bytes per second.
    pub link_bandwidth: f64,
}

impl Default for InterconnectModel {
    fn default() -> Self {
        // 100 Gbit/s EXTOLL link
        InterconnectModel {
            link_bandwidth: 100.0e9 / 8.0,
        }
    }
}

/// Calibrated work coefficients of the mini-app, expressed in work units
/// (seconds on the module that is fastest for the corresponding solver).
///
/// Defaults are tuned for the bench defaults (4096 cells per node, 16
/// particles per cell, CG tolerance 1e-3): the field solver is about 3% of
/// a single-node step, the particle solver the rest, and field output is
/// written by one rank through a 1 Gbit/s path.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadModel {
    /// Field-solver work per grid cell per CG iteration.
    pub field_work_per_cell_iter: f64,
    /// Particle-solver work (push + moment gathering) per particle.
    pub particle_work_per_particle: f64,
    /// Kinetic-energy diagnostic work per particle (particle class).
    pub kinetic_work_per_particle: f64,
    /// Field-energy diagnostic work per cell (field class).
    pub field_energy_work_per_cell: f64,
    /// Bandwidth of the single-writer output path to the global store, bytes/s.
    pub output_bandwidth: f64,
}

impl Default for WorkloadModel {
    fn default() -> Self {
        WorkloadModel {
            field_work_per_cell_iter: 2.0e-9,
            particle_work_per_particle: 2.5e-7,
            kinetic_work_per_particle: 2.5e-9,
            field_energy_work_per_cell: 1.3e-9,
            output_bandwidth: 1.0e9 / 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlatformConfig {
    pub cluster: ModuleSpec,
    pub booster: ModuleSpec,
    pub interconnect: InterconnectModel,
    /// Minimum share of a solver's compute time charged for each cross-module
    /// exchange; the wire transfer counts toward it.
    pub comm_overhead_fraction: f64,
    pub workload: WorkloadModel,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            cluster: ModuleSpec::deep_er_cluster(),
            booster: ModuleSpec::deep_er_booster(),
            interconnect: InterconnectModel::default(),
            comm_overhead_fraction: 0.035,
            workload: WorkloadModel::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed platform config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid platform config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// One failed invariant, keyed by its dotted path in the config document.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl PlatformConfig {
    pub fn module(&self, kind: NodeKind) -> &ModuleSpec {
        match kind {
            NodeKind::Cluster => &self.cluster,
            NodeKind::Booster => &self.booster,
        }
    }

    pub fn module_mut(&mut self, kind: NodeKind) -> &mut ModuleSpec {
        match kind {
            NodeKind::Cluster => &mut self.cluster,
            NodeKind::Booster => &mut self.booster,
        }
    }

    /// Virtual seconds to move `size` bytes from a `src` node to a `dst` node.
    pub fn comm_cost(&self, size: usize, src: NodeKind, dst: NodeKind) -> f64 {
        let latency = self
            .module(src)
            .mpi_latency
            .max(self.module(dst).mpi_latency);
        latency + size as f64 / self.interconnect.link_bandwidth
    }

    /// Virtual seconds for `work` units of `solver` work on a `kind` node.
    pub fn compute_cost(&self, work: f64, kind: NodeKind, solver: Solver) -> f64 {
        work / self.module(kind).speed_factor(solver)
    }

    /// Every invariant violation, keyed by path. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |key: String, message: &str| {
            out.push(Violation {
                key,
                message: message.to_string(),
            })
        };
        for m in [&self.cluster, &self.booster] {
            let p = m.kind.as_str();
            if m.node_count < 1 {
                bad(format!("{p}.node_count"), "must be at least 1");
            }
            if m.cores_per_node < 1 {
                bad(format!("{p}.cores_per_node"), "must be at least 1");
            }
            if !(m.speed_factor_field > 0.0 && m.speed_factor_field.is_finite()) {
                bad(format!("{p}.speed_factor_field"), "must be positive");
            }
            if !(m.speed_factor_particle > 0.0 && m.speed_factor_particle.is_finite()) {
                bad(format!("{p}.speed_factor_particle"), "must be positive");
            }
            if !(m.mpi_latency > 0.0 && m.mpi_latency.is_finite()) {
                bad(format!("{p}.mpi_latency"), "must be positive");
            }
        }
        if self.cluster.kind != NodeKind::Cluster {
            bad("cluster.kind".into(), "must be cluster");
        }
        if self.booster.kind != NodeKind::Booster {
            bad("booster.kind".into(), "must be booster");
        }
        if !(self.interconnect.link_bandwidth > 0.0 && self.interconnect.link_bandwidth.is_finite())
        {
            bad("interconnect.link_bandwidth".into(), "must be positive");
        }
        if !(0.0..1.0).contains(&self.comm_overhead_fraction) {
            bad("comm_overhead_fraction".into(), "must lie in [0, 1)");
        }
        let w = &self.workload;
        for (key, v) in [
            ("workload.field_work_per_cell_iter", w.field_work_per_cell_iter),
            ("workload.particle_work_per_particle", w.particle_work_per_particle),
            ("workload.kinetic_work_per_particle", w.kinetic_work_per_particle),
            ("workload.field_energy_work_per_cell", w.field_energy_work_per_cell),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad(key.into(), "must be non-negative");
            }
        }
        if !(w.output_bandwidth > 0.0) {
            bad("workload.output_bandwidth".into(), "must be positive");
        }
        out
    }

    /// Parse a JSON config document; absent keys keep their defaults.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = if text.trim().is_empty() {
            ConfigFile::default()
        } else {
            serde_json::from_str(text)?
        };
        let cfg = file.into_config()?;
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ConfigFile::from_config(self))
            .expect("config serialization cannot fail")
    }
}

/// Load and validate a platform config document.
pub fn load_platform_config(text: &str) -> Result<PlatformConfig, ConfigError> {
    PlatformConfig::from_json(text)
}

// File representation: every key optional, file units.

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster: Option<ModuleFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    booster: Option<ModuleFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interconnect: Option<InterconnectFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_overhead_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workload: Option<WorkloadFile>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuleFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<NodeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_count: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cores_per_node: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speed_factor_field: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speed_factor_particle: Option<f64>,
    /// microseconds
    #[serde(skip_serializing_if = "Option::is_none")]
    mpi_latency: Option<f64>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterconnectFile {
    /// bit/s
    #[serde(skip_serializing_if = "Option::is_none")]
    link_bandwidth: Option<f64>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    field_work_per_cell_iter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    particle_work_per_particle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kinetic_work_per_particle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field_energy_work_per_cell: Option<f64>,
    /// bit/s
    #[serde(skip_serializing_if = "Option::is_none")]
    output_bandwidth: Option<f64>,
}

fn count(key: &str, v: Option<i64>, default: usize) -> Result<usize, Violation> {
    match v {
        None => Ok(default),
        Some(n) if n >= 0 => Ok(n as usize),
        Some(_) => Err(Violation {
            key: key.to_string(),
            message: "must be at least 1".to_string(),
        }),
    }
}

// Scale by a power of ten in decimal, so "1.8" µs is the double nearest
// 1.8e-6 rather than 1.8 / 1e6, which is one ulp off.
fn shift_decimal(v: f64, exp: i32) -> f64 {
    if !v.is_finite() {
        return v * 10f64.powi(exp);
    }
    format!("{v}e{exp}").parse().expect("decimal rendering of a finite f64 parses")
}

fn file_us_to_seconds(us: f64) -> f64 {
    shift_decimal(us, -6)
}

// Pick the microsecond value that loads back to exactly `s`.
fn seconds_to_file_us(s: f64) -> f64 {
    let us = shift_decimal(s, 6);
    if file_us_to_seconds(us) == s {
        return us;
    }
    let (mut lo, mut hi) = (us, us);
    for _ in 0..4 {
        lo = f64::from_bits(lo.to_bits() - 1);
        hi = f64::from_bits(hi.to_bits() + 1);
        if file_us_to_seconds(lo) == s {
            return lo;
        }
        if file_us_to_seconds(hi) == s {
            return hi;
        }
    }
    us
}

impl ModuleFile {
    fn merge(self, prefix: &str, base: ModuleSpec, errs: &mut Vec<Violation>) -> ModuleSpec {
        let mut m = base.clone();
        if let Some(k) = self.kind {
            m.kind = k;
        }
        match count(&format!("{prefix}.node_count"), self.node_count, base.node_count) {
            Ok(n) => m.node_count = n,
            Err(e) => errs.push(e),
        }
        match count(
            &format!("{prefix}.cores_per_node"),
            self.cores_per_node,
            base.cores_per_node,
        ) {
            Ok(n) => m.cores_per_node = n,
            Err(e) => errs.push(e),
        }
        if let Some(v) = self.speed_factor_field {
            m.speed_factor_field = v;
        }
        if let Some(v) = self.speed_factor_particle {
            m.speed_factor_particle = v;
        }
        if let Some(us) = self.mpi_latency {
            m.mpi_latency = file_us_to_seconds(us);
        }
        m
    }

    fn from_spec(m: &ModuleSpec) -> Self {
        ModuleFile {
            kind: Some(m.kind),
            node_count: Some(m.node_count as i64),
            cores_per_node: Some(m.cores_per_node as i64),
            speed_factor_field: Some(m.speed_factor_field),
            speed_factor_particle: Some(m.speed_factor_particle),
            mpi_latency: Some(seconds_to_file_us(m.mpi_latency)),
        }
    }
}

impl ConfigFile {
    fn into_config(self) -> Result<PlatformConfig, ConfigError> {
        let d = PlatformConfig::default();
        let mut errs = Vec::new();
        let cluster = self
            .cluster
            .unwrap_or_default()
            .merge("cluster", d.cluster, &mut errs);
        let booster = self
            .booster
            .unwrap_or_default()
            .merge("booster", d.booster, &mut errs);
        let interconnect = match self.interconnect.and_then(|i| i.link_bandwidth) {
            Some(bits) => InterconnectModel {
                link_bandwidth: bits / 8.0,
            },
            None => d.interconnect,
        };
        let w = self.workload.unwrap_or_default();
        let dw = d.workload;
        let workload = WorkloadModel {
            field_work_per_cell_iter: w.field_work_per_cell_iter.unwrap_or(dw.field_work_per_cell_iter),
            particle_work_per_particle: w
                .particle_work_per_particle
                .unwrap_or(dw.particle_work_per_particle),
            kinetic_work_per_particle: w
                .kinetic_work_per_particle
                .unwrap_or(dw.kinetic_work_per_particle),
            field_energy_work_per_cell: w
                .field_energy_work_per_cell
                .unwrap_or(dw.field_energy_work_per_cell),
            output_bandwidth: w.output_bandwidth.map_or(dw.output_bandwidth, |b| b / 8.0),
        };
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        Ok(PlatformConfig {
            cluster,
            booster,
            interconnect,
            comm_overhead_fraction: self
                .comm_overhead_fraction
                .unwrap_or(d.comm_overhead_fraction),
            workload,
        })
    }

    fn from_config(c: &PlatformConfig) -> Self {
        let w = &c.workload;
        ConfigFile {
            cluster: Some(ModuleFile::from_spec(&c.cluster)),
            booster: Some(ModuleFile::from_spec(&c.booster)),
            interconnect: Some(InterconnectFile {
                link_bandwidth: Some(c.interconnect.link_bandwidth * 8.0),
            }),
            comm_overhead_fraction: Some(c.comm_overhead_fraction),
            workload: Some(WorkloadFile {
                field_work_per_cell_iter: Some(w.field_work_per_cell_iter),
                particle_work_per_particle: Some(w.particle_work_per_particle),
                kinetic_work_per_particle: Some(w.kinetic_work_per_particle),
                field_energy_work_per_cell: Some(w.field_energy_work_per_cell),
                output_bandwidth: Some(w.output_bandwidth * 8.0),
            }),
        }
    }
}
