//! Particle storage, cloud-in-cell deposition and the Boris push.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::exec::Exec;

use super::grid::{Decomp, Moments};
use super::params::SimParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

/// One species held by one rank.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub q: f64,
    pub m: f64,
    pub parts: Vec<Particle>,
}

/// Electric field on a rank's rows plus the first row of the next rank,
/// enough to interpolate anywhere inside the rank's rows.
#[derive(Clone, Debug)]
pub struct EView<'a> {
    pub nx: usize,
    pub ny: usize,
    pub row_start: usize,
    pub rows: usize,
    pub ex: &'a [f64],
    pub ey: &'a [f64],
    pub ghost_ex: &'a [f64],
    pub ghost_ey: &'a [f64],
    pub b: [f64; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MoveStats {
    /// Σ q·E(xᵢ)·dt over the pushed particles.
    pub impulse: [f64; 2],
}

/// Bilinear weights and node indices for a position. Rows are global.
#[inline]
pub fn cic(x: f64, y: f64, h: f64, nx: usize, ny: usize) -> ([usize; 2], [usize; 2], [f64; 4]) {
    let gx = x / h;
    let gy = y / h;
    let ix = (gx.floor() as usize).min(nx - 1);
    let iy = (gy.floor() as usize).min(ny - 1);
    let fx = gx - ix as f64;
    let fy = gy - iy as f64;
    let ix1 = if ix + 1 == nx { 0 } else { ix + 1 };
    (
        [ix, ix1],
        [iy, iy + 1],
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    )
}

/// Global row holding `y`.
#[inline]
pub fn row_of(y: f64, h: f64, ny: usize) -> usize {
    ((y / h).floor() as usize).min(ny - 1)
}

/// Wrap a coordinate into `[0, l)`.
#[inline]
pub fn wrap(v: f64, l: f64) -> f64 {
    let w = v.rem_euclid(l);
    if w >= l {
        0.0
    } else {
        w
    }
}

impl ParticleSet {
    pub fn empty(q: f64, m: f64) -> Self {
        ParticleSet {
            q,
            m,
            parts: Vec::new(),
        }
    }

    /// Uniform positions over `rank`'s rows, Gaussian velocities. The stream
    /// is fixed by (seed, rank index).
    pub fn init(params: &SimParams, decomp: &Decomp, rank: usize) -> Self {
        let (r0, r1) = decomp.rows(rank);
        let h = params.cell_size;
        let n = params.particles_per_cell * params.cells_x * (r1 - r0);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(rank as u64);
        let normal = Normal::new(0.0, params.thermal_velocity.max(f64::MIN_POSITIVE)).unwrap();
        let lx = params.lx();
        let (y0, y1) = (r0 as f64 * h, r1 as f64 * h);
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.gen_range(0.0..lx);
            let y = rng.gen_range(y0..y1);
            let (vx, vy, vz) = if params.thermal_velocity > 0.0 {
                (
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            parts.push(Particle { x, y, vx, vy, vz });
        }
        ParticleSet {
            q: params.charge,
            m: params.mass,
            parts,
        }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Cloud-in-cell deposition of q and q·v onto `rows` rows starting at
    /// `row_start`, plus one ghost row below the next rank's first row.
    /// Every particle must lie inside the rows.
    pub fn gather_moments(&self, params: &SimParams, row_start: usize, rows: usize) -> Moments {
        let nx = params.cells_x;
        let h = params.cell_size;
        let scale = self.q / params.cell_area();
        let mut m = Moments::zeros(nx, row_start, rows + 1);
        for p in &self.parts {
            let (ix, iy, w) = cic(p.x, p.y, h, nx, params.cells_y);
            let j0 = iy[0] - row_start;
            debug_assert!(j0 < rows, "particle outside rank rows");
            let idx = [
                j0 * nx + ix[0],
                j0 * nx + ix[1],
                (j0 + 1) * nx + ix[0],
                (j0 + 1) * nx + ix[1],
            ];
            for k in 0..4 {
                let s = scale * w[k];
                m.rho[idx[k]] += s;
                m.jx[idx[k]] += s * p.vx;
                m.jy[idx[k]] += s * p.vy;
                m.jz[idx[k]] += s * p.vz;
            }
        }
        m
    }

    /// Boris push with periodic wrap.
    pub fn move_particles(&mut self, params: &SimParams, e: &EView<'_>, exec: Exec) -> MoveStats {
        let qm = self.q / self.m;
        let half = 0.5 * params.dt * qm;
        let dt = params.dt;
        let h = params.cell_size;
        let (lx, ly) = (params.lx(), params.ly());
        let t = [half * e.b[0], half * e.b[1], half * e.b[2]];
        let t2 = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
        let s = [2.0 * t[0] / (1.0 + t2), 2.0 * t[1] / (1.0 + t2), 2.0 * t[2] / (1.0 + t2)];
        let q = self.q;
        let partials = exec.map_chunks(&mut self.parts, |_, chunk| {
            let mut imp = [0.0f64; 2];
            for p in chunk.iter_mut() {
                let (exi, eyi) = e.at(p.x, p.y, h);
                imp[0] += q * exi * dt;
                imp[1] += q * eyi * dt;
                let vm = [p.vx + half * exi, p.vy + half * eyi, p.vz];
                let vp = [
                    vm[0] + (vm[1] * t[2] - vm[2] * t[1]),
                    vm[1] + (vm[2] * t[0] - vm[0] * t[2]),
                    vm[2] + (vm[0] * t[1] - vm[1] * t[0]),
                ];
                let vplus = [
                    vm[0] + (vp[1] * s[2] - vp[2] * s[1]),
                    vm[1] + (vp[2] * s[0] - vp[0] * s[2]),
                    vm[2] + (vp[0] * s[1] - vp[1] * s[0]),
                ];
                p.vx = vplus[0] + half * exi;
                p.vy = vplus[1] + half * eyi;
                p.vz = vplus[2];
                p.x = wrap(p.x + p.vx * dt, lx);
                p.y = wrap(p.y + p.vy * dt, ly);
            }
            imp
        });
        let impulse = partials
            .iter()
            .fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
        MoveStats { impulse }
    }

    /// Σ ½ m |v|² over this rank's particles.
    pub fn kinetic_energy(&self, exec: Exec) -> f64 {
        let m = self.m;
        let parts = &self.parts;
        exec.chunked_sum(parts.len(), |i| {
            let p = &parts[i];
            0.5 * m * (p.vx * p.vx + p.vy * p.vy + p.vz * p.vz)
        })
    }

    /// Σ m·v over this rank's particles.
    pub fn momentum(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for p in &self.parts {
            s[0] += self.m * p.vx;
            s[1] += self.m * p.vy;
            s[2] += self.m * p.vz;
        }
        s
    }
}

impl EView<'_> {
    #[inline]
    pub fn at(&self, x: f64, y: f64, h: f64) -> (f64, f64) {
        let (ix, iy, w) = cic(x, y, h, self.nx, self.ny);
        let j0 = iy[0] - self.row_start;
        let row = |j: usize, a: &'_ [f64], g: &'_ [f64], i: usize| {
            if j < self.rows {
                a[j * self.nx + i]
            } else {
                g[i]
            }
        };
        let mut ex = 0.0;
        let mut ey = 0.0;
        let corners = [(j0, ix[0]), (j0, ix[1]), (j0 + 1, ix[0]), (j0 + 1, ix[1])];
        for (k, (j, i)) in corners.into_iter().enumerate() {
            ex += w[k] * row(j, self.ex, self.ghost_ex, i);
            ey += w[k] * row(j, self.ey, self.ghost_ey, i);
        }
        (ex, ey)
    }
}
