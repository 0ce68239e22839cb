#![allow(dead_code)]

pub mod physics;
pub mod replay;
pub mod sched;
pub mod sim;
