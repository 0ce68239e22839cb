//! Field-solver and pusher checks shared by the physics and acceptance tests.

use std::f64::consts::PI;

use cbemu::modsched::Allocation;
use cbemu::mprt::Runtime;
use cbemu::xpic::grid::Decomp;
use cbemu::xpic::particles::EView;
use cbemu::xpic::poisson::{self, SolveStats};
use cbemu::xpic::{Particle, ParticleSet, SimParams};
use cbemu::{Exec, NodeKind, PlatformConfig};

pub type RhoFn = fn(&SimParams, usize, usize) -> f64;

/// Solve on `ranks` ranks with `rho(i, j)`; returns the gathered phi and
/// the stats every rank agreed on.
pub fn solve_on(p: &SimParams, ranks: usize, rho: RhoFn) -> (Vec<f64>, SolveStats) {
    let mut rt = Runtime::new(PlatformConfig::default());
    let params = p.clone();
    rt.register("solve", move |proc| {
        let w = proc.world().clone();
        let rank = w.rank().unwrap();
        let d = Decomp::new(params.cells_x, params.cells_y, w.size())?;
        let (r0, r1) = d.rows(rank);
        let nx = params.cells_x;
        let local: Vec<f64> = (r0..r1)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| rho(&params, i, j))
            .collect();
        let mut phi = vec![0.0; local.len()];
        let st = poisson::solve(proc, &w, &d, rank, &params, &local, &mut phi)?;
        Ok(Box::new((phi, st)))
    });
    let mut out = rt
        .launch("solve", ranks, NodeKind::Cluster, &Allocation::unmanaged(ranks, 0))
        .unwrap();
    let ids: Vec<_> = out.outputs.keys().copied().collect();
    let mut phi = Vec::new();
    let mut stats = Vec::new();
    for id in ids {
        let (v, st) = out.take::<(Vec<f64>, SolveStats)>(id).unwrap();
        phi.extend(v);
        stats.push(st);
    }
    assert!(stats.windows(2).all(|w| w[0] == w[1]), "ranks disagree on solver stats");
    (phi, stats[0])
}

pub const MODE: (f64, f64) = (2.0, 1.0);

pub fn mode_rho(p: &SimParams, i: usize, j: usize) -> f64 {
    let x = MODE.0 * i as f64 / p.cells_x as f64;
    let y = MODE.1 * j as f64 / p.cells_y as f64;
    (2.0 * PI * (x + y)).cos()
}

/// Single Fourier mode on a 32×24 grid: (max |phi − exact|, max |exact|, stats).
/// The exact answer divides by the eigenvalue of the discrete operator.
pub fn fourier_check(tol: f64, ranks: usize) -> (f64, f64, SolveStats) {
    let (nx, ny) = (32, 24);
    let mut p = SimParams::new(nx, ny, 1);
    p.cell_size = 0.5;
    p.solver_tol = tol;
    let (phi, st) = solve_on(&p, ranks, mode_rho);
    let lam = (4.0 * (PI * MODE.0 / nx as f64).sin().powi(2)
        + 4.0 * (PI * MODE.1 / ny as f64).sin().powi(2))
        / p.cell_area();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let exact = mode_rho(&p, i, j) / lam;
            worst = worst.max((phi[j * nx + i] - exact).abs());
            scale = scale.max(exact.abs());
        }
    }
    (worst, scale, st)
}

pub fn uniform_view<'a>(nx: usize, ny: usize, b: [f64; 3], ex: &'a [f64], ey: &'a [f64]) -> EView<'a> {
    EView {
        nx,
        ny,
        row_start: 0,
        rows: ny,
        ex,
        ey,
        ghost_ex: &ex[..nx],
        ghost_ey: &ey[..nx],
        b,
    }
}

pub fn single(q: f64, m: f64, v: [f64; 3]) -> ParticleSet {
    ParticleSet {
        q,
        m,
        parts: vec![Particle {
            x: 3.3,
            y: 4.6,
            vx: v[0],
            vy: v[1],
            vz: v[2],
        }],
    }
}

/// Worst |Δv − qE·dt/m| over a few constant-E pushes with B = 0.
pub fn boris_increment_error() -> f64 {
    let mut p = SimParams::new(8, 8, 1);
    p.dt = 0.05;
    let mut worst: f64 = 0.0;
    for (e, v0) in [((0.7, -1.3), [0.2, -0.4, 0.1]), ((-2.0, 0.25), [0.0; 3]), ((1e-3, 5.0), [3.0, 1.0, -2.0])] {
        let (ex, ey) = (vec![e.0; 64], vec![e.1; 64]);
        let view = uniform_view(8, 8, [0.0; 3], &ex, &ey);
        let (q, m) = (-0.8, 1.7);
        let mut s = single(q, m, v0);
        s.move_particles(&p, &view, Exec::Sequential);
        let dv = [s.parts[0].vx - v0[0], s.parts[0].vy - v0[1], s.parts[0].vz - v0[2]];
        let want = [q * e.0 * p.dt / m, q * e.1 * p.dt / m, 0.0];
        for a in 0..3 {
            worst = worst.max((dv[a] - want[a]).abs());
        }
    }
    worst
}

/// Pure magnetic rotation with E = 0: (worst relative speed drift, worst
/// |angle − 2·atan(qB·dt/2m)|) over 50 pushes for a few (B, q, m).
pub fn boris_rotation_errors() -> (f64, f64) {
    let mut p = SimParams::new(8, 8, 1);
    p.dt = 0.1;
    let zeros = vec![0.0; 64];
    let mut speed_err: f64 = 0.0;
    let mut angle_err: f64 = 0.0;
    for (bz, q, m) in [(0.5, -1.0, 1.0), (3.0, 2.0, 0.5), (0.01, 1.0, 1.0)] {
        let view = uniform_view(8, 8, [0.0, 0.0, bz], &zeros, &zeros);
        let v0 = [0.6, -0.8, 0.3];
        let mut s = single(q, m, v0);
        let speed0 = (v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2]).sqrt();
        let want = 2.0 * (q * bz * p.dt / (2.0 * m)).atan();
        let mut prev = (v0[0], v0[1]);
        for _ in 0..50 {
            s.move_particles(&p, &view, Exec::Sequential);
            let v = &s.parts[0];
            let speed = (v.vx * v.vx + v.vy * v.vy + v.vz * v.vz).sqrt();
            speed_err = speed_err.max((speed - speed0).abs() / speed0);
            // dv/dt = (q/m) v × B turns v clockwise about +z for qB > 0
            let cross = prev.0 * v.vy - prev.1 * v.vx;
            let dot = prev.0 * v.vx + prev.1 * v.vy;
            angle_err = angle_err.max((-cross.atan2(dot) - want).abs());
            prev = (v.vx, v.vy);
        }
    }
    (speed_err, angle_err)
}
