//! Distributed field solver: periodic 5-point Poisson by conjugate gradient
//! over row blocks, and E = -grad(phi) by centered differences.

use crate::mprt::{Communicator, Process, ReduceOp};
use crate::platform::Solver;

use super::buffer::{get_f64s, put_f64s};
use super::grid::{Decomp, FieldBlock};
use super::params::SimParams;
use super::{tags, XpicError};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iters: usize,
    /// True-residual evaluations (each one halo exchange and one reduction).
    pub checks: usize,
    /// ‖A·phi − b‖ of the returned phi.
    pub residual: f64,
    /// ‖b‖ with the mean removed.
    pub rhs_norm: f64,
}

fn encode(v: &[f64]) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 * v.len());
    put_f64s(&mut b, v);
    b
}

/// Rows just outside this rank's block: (row below start, row at end).
pub fn halo(
    p: &mut Process,
    comm: &Communicator,
    d: &Decomp,
    rank: usize,
    data: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), XpicError> {
    let nx = d.nx;
    let rows = data.len() / nx;
    let first = &data[..nx];
    let last = &data[(rows - 1) * nx..];
    if d.ranks == 1 {
        return Ok((last.to_vec(), first.to_vec()));
    }
    p.send(comm, d.prev(rank), tags::HALO_DOWN, encode(first))?;
    p.send(comm, d.next(rank), tags::HALO_UP, encode(last))?;
    let below = get_f64s(&p.recv(comm, d.prev(rank), tags::HALO_UP)?);
    let above = get_f64s(&p.recv(comm, d.next(rank), tags::HALO_DOWN)?);
    Ok((below, above))
}

/// Negative 5-point Laplacian.
fn apply(nx: usize, rows: usize, h2: f64, x: &[f64], below: &[f64], above: &[f64], out: &mut [f64]) {
    for j in 0..rows {
        for i in 0..nx {
            let c = x[j * nx + i];
            let l = x[j * nx + if i == 0 { nx - 1 } else { i - 1 }];
            let r = x[j * nx + if i + 1 == nx { 0 } else { i + 1 }];
            let dn = if j == 0 { below[i] } else { x[(j - 1) * nx + i] };
            let up = if j + 1 == rows { above[i] } else { x[(j + 1) * nx + i] };
            out[j * nx + i] = (4.0 * c - l - r - dn - up) / h2;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (x, y)| s + x * y)
}

fn sum(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |s, x| s + x)
}

/// Solve ∇²phi = −(rho − mean rho) for this rank's rows; `phi` holds the
/// starting guess on entry. The returned phi has zero global mean.
pub fn solve(
    p: &mut Process,
    comm: &Communicator,
    d: &Decomp,
    rank: usize,
    params: &SimParams,
    rho: &[f64],
    phi: &mut [f64],
) -> Result<SolveStats, XpicError> {
    let nx = d.nx;
    let rows = d.row_count(rank);
    let n = nx * rows;
    let n_global = (d.nx * d.ny) as f64;
    let h2 = params.cell_area();
    let work_per_iter = p.config().workload.field_work_per_cell_iter * n as f64;

    let mean = p.allreduce_scalar(comm, ReduceOp::Sum, sum(rho))? / n_global;
    let b: Vec<f64> = rho.iter().map(|v| v - mean).collect();
    let bnorm = p.allreduce_scalar(comm, ReduceOp::Sum, dot(&b, &b))?.sqrt();
    let mut stats = SolveStats {
        rhs_norm: bnorm,
        ..Default::default()
    };
    if bnorm == 0.0 {
        phi.fill(0.0);
        return Ok(stats);
    }
    let target = params.solver_tol * bnorm;
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    loop {
        let (below, above) = halo(p, comm, d, rank, phi)?;
        apply(nx, rows, h2, phi, &below, &above, &mut q);
        for k in 0..n {
            r[k] = b[k] - q[k];
        }
        let mut rr = p.allreduce_scalar(comm, ReduceOp::Sum, dot(&r, &r))?;
        stats.checks += 1;
        stats.residual = rr.sqrt();
        if stats.residual <= target {
            return Ok(stats);
        }
        if stats.iters >= params.solver_max_iters {
            return Err(XpicError::NonConvergence {
                iters: stats.iters,
                residual: stats.residual / bnorm,
            });
        }
        let mut dir = r.clone();
        loop {
            let (below, above) = halo(p, comm, d, rank, &dir)?;
            apply(nx, rows, h2, &dir, &below, &above, &mut q);
            p.compute(work_per_iter, Solver::Field);
            let pq = p.allreduce_scalar(comm, ReduceOp::Sum, dot(&dir, &q))?;
            let alpha = rr / pq;
            for k in 0..n {
                phi[k] += alpha * dir[k];
                r[k] -= alpha * q[k];
            }
            let rr_new = p.allreduce_scalar(comm, ReduceOp::Sum, dot(&r, &r))?;
            stats.iters += 1;
            if rr_new.sqrt() <= target || stats.iters >= params.solver_max_iters {
                break;
            }
            let beta = rr_new / rr;
            for k in 0..n {
                dir[k] = r[k] + beta * dir[k];
            }
            rr = rr_new;
        }
        let shift = p.allreduce_scalar(comm, ReduceOp::Sum, sum(phi))? / n_global;
        for v in phi.iter_mut() {
            *v -= shift;
        }
    }
}

/// E = −∇phi by centered differences on this rank's rows.
pub fn calculate_e(
    p: &mut Process,
    comm: &Communicator,
    d: &Decomp,
    rank: usize,
    params: &SimParams,
    f: &mut FieldBlock,
) -> Result<(), XpicError> {
    let nx = d.nx;
    let rows = f.rows;
    let inv = 1.0 / (2.0 * params.cell_size);
    let (below, above) = halo(p, comm, d, rank, &f.phi)?;
    let phi = &f.phi;
    for j in 0..rows {
        for i in 0..nx {
            let l = phi[j * nx + if i == 0 { nx - 1 } else { i - 1 }];
            let r = phi[j * nx + if i + 1 == nx { 0 } else { i + 1 }];
            let dn = if j == 0 { below[i] } else { phi[(j - 1) * nx + i] };
            let up = if j + 1 == rows { above[i] } else { phi[(j + 1) * nx + i] };
            f.ex[j * nx + i] = -(r - l) * inv;
            f.ey[j * nx + i] = -(up - dn) * inv;
        }
    }
    Ok(())
}

/// Σ ½|E|²·cell_area over this rank's rows.
pub fn field_energy_local(f: &FieldBlock, cell_area: f64) -> f64 {
    f.ex
        .iter()
        .zip(&f.ey)
        .fold(0.0, |s, (x, y)| s + 0.5 * (x * x + y * y))
        * cell_area
}

/// Residual ‖A·phi − (rho − mean)‖ of a whole-grid solution, computed serially.
pub fn residual_serial(params: &SimParams, rho: &[f64], phi: &[f64]) -> f64 {
    let (nx, ny) = (params.cells_x, params.cells_y);
    let mean = sum(rho) / (nx * ny) as f64;
    let mut out = vec![0.0; nx * ny];
    apply(
        nx,
        ny,
        params.cell_area(),
        phi,
        &phi[(ny - 1) * nx..],
        &phi[..nx],
        &mut out,
    );
    out.iter()
        .zip(rho)
        .fold(0.0, |s, (a, r)| s + (a - (r - mean)).powi(2))
        .sqrt()
}
