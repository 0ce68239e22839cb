//! Emulator of a Cluster-Booster machine and the applications run on it.
//!
//! - [`platform`]: node modules, fabric and cost model
//! - [`mprt`]: message-passing runtime with virtual time and spawn
//! - [`modsched`]: independent per-module node reservation
//! - [`xpic`]: 2D electrostatic particle-in-cell code, monolithic or split
//! - [`ckpt`]: multi-level checkpoint/restart
//! - [`harness`]: scenarios, weak scaling and result emission

pub mod ckpt;
pub mod exec;
pub mod harness;
pub mod modsched;
pub mod mprt;
pub mod platform;
pub mod xpic;

pub use exec::Exec;
pub use platform::{load_platform_config, NodeKind, PlatformConfig, Solver};
