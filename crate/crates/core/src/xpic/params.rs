use serde::{Deserialize, Serialize};

use super::XpicError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub cells_x: usize,
    pub cells_y: usize,
    pub cell_size: f64,
    pub dt: f64,
    pub particles_per_cell: usize,
    pub steps: usize,
    pub seed: u64,
    /// Uniform static magnetic field.
    pub b0: [f64; 3],
    pub solver_tol: f64,
    pub solver_max_iters: usize,
    /// Standard deviation of each velocity component at start.
    pub thermal_velocity: f64,
    pub charge: f64,
    pub mass: f64,
    /// Particles per neighbour buffer in one migration round.
    pub migration_capacity: usize,
    /// Field output is written on steps that are multiples of this.
    pub output_every: usize,
}

impl SimParams {
    /// Normalized plasma: unit density, unit plasma frequency, q/m = -1.
    pub fn new(cells_x: usize, cells_y: usize, particles_per_cell: usize) -> Self {
        let ppc = particles_per_cell.max(1) as f64;
        SimParams {
            cells_x,
            cells_y,
            cell_size: 1.0,
            dt: 0.1,
            particles_per_cell,
            steps: 10,
            seed: 1,
            b0: [0.0, 0.0, 0.5],
            solver_tol: 1e-3,
            solver_max_iters: 2000,
            thermal_velocity: 1.0,
            charge: -1.0 / ppc,
            mass: 1.0 / ppc,
            migration_capacity: 256,
            output_every: 1,
        }
    }

    /// Weak-scaling grid for `nodes` nodes of `cells_per_node` cells each:
    /// square tiles of side sqrt(cells_per_node) arranged as a×b with
    /// a the largest divisor of `nodes` not above its square root.
    pub fn weak_scaled(
        cells_per_node: usize,
        nodes: usize,
        particles_per_cell: usize,
    ) -> Result<Self, XpicError> {
        let side = (cells_per_node as f64).sqrt().round() as usize;
        if side == 0 || side * side != cells_per_node {
            return Err(XpicError::InvalidParams(format!(
                "cells per node must be a positive square, got {cells_per_node}"
            )));
        }
        if nodes == 0 {
            return Err(XpicError::InvalidParams("node count must be at least 1".into()));
        }
        let a = (1..=nodes).filter(|d| nodes % d == 0 && d * d <= nodes).max().unwrap_or(1);
        let b = nodes / a;
        Ok(Self::new(side * a, side * b, particles_per_cell))
    }

    pub fn cells(&self) -> usize {
        self.cells_x * self.cells_y
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn lx(&self) -> f64 {
        self.cells_x as f64 * self.cell_size
    }

    pub fn ly(&self) -> f64 {
        self.cells_y as f64 * self.cell_size
    }

    pub fn validate(&self) -> Result<(), XpicError> {
        let bad = |what: &str| Err(XpicError::InvalidParams(what.to_string()));
        if self.cells_x < 1 || self.cells_y < 1 {
            return bad("grid must have at least one cell per axis");
        }
        if self.particles_per_cell < 1 {
            return bad("particles_per_cell must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad("cell_size must be positive");
        }
        if !(self.solver_tol > 0.0) {
            return bad("solver_tol must be positive");
        }
        if self.solver_max_iters < 1 {
            return bad("solver_max_iters must be at least 1");
        }
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.migration_capacity < 1 || self.output_every < 1 {
            return bad("migration_capacity and output_every must be at least 1");
        }
        if !(self.thermal_velocity >= 0.0) {
            return bad("thermal_velocity must be non-negative");
        }
        Ok(())
    }
}
