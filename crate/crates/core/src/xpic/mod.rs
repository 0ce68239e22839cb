//! Miniature xPic: a 2D electrostatic particle-in-cell code split into a
//! field solver (CG Poisson, communication heavy) and a particle solver
//! (Boris push and moment gathering, embarrassingly parallel).
//!
//! It runs either monolithically, both solvers on one world, or split with
//! the particle solver on the Booster spawning the field solver on the
//! Cluster. Both give bit-identical physics for equal rank counts.

pub mod buffer;
pub mod driver;
pub mod exchange;
pub mod grid;
pub mod params;
pub mod particles;
pub mod poisson;
pub mod trace;

use thiserror::Error;

use crate::mprt::MprtError;

pub use driver::{
    register_roles, run_booster_role, run_cluster_role, run_monolithic, RankLog, SideKind,
    Snapshot, StepHook, StepRecord, XpicJob, XpicOptions, ROLE_BOOSTER, ROLE_CLUSTER, ROLE_MONO,
};
pub use grid::{Decomp, FieldBlock, Moments};
pub use params::SimParams;
pub use particles::{Particle, ParticleSet};
pub use trace::{StepRow, StepTrace};

pub(crate) mod tags {
    pub const HALO_UP: i32 = 10;
    pub const HALO_DOWN: i32 = 11;
    pub const E_GHOST: i32 = 12;
    pub const RHO_GHOST: i32 = 13;
    pub const MIG_UP: i32 = 14;
    pub const MIG_DOWN: i32 = 15;
    pub const OUTPUT: i32 = 16;
    pub const MOMENTS: i32 = 20;
    pub const FIELDS: i32 = 21;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XpicError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("cannot split {rows} rows over {ranks} ranks")]
    Decomposition { rows: usize, ranks: usize },
    #[error("CG did not converge in {iters} iterations (relative residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("interface buffer: {0}")]
    Buffer(String),
    #[error("interface tiling: {0}")]
    Tiling(String),
    #[error("inter-communicator groups {local}x{remote} do not match the decomposition")]
    PartnerMismatch { local: usize, remote: usize },
    #[error("role started without the expected parent")]
    NoParent,
    #[error(transparent)]
    Runtime(#[from] MprtError),
}
