//! Row-block decomposition of the periodic node grid and the per-rank blocks
//! of fields and moments.
//!
//! Grid node (i, j) sits at (i·h, j·h); i runs along x (columns), j along y
//! (rows). Arrays are row-major with `nx` entries per row.

use super::XpicError;

/// Contiguous row blocks: `ny / ranks` rows each, remainder to the last rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decomp {
    pub nx: usize,
    pub ny: usize,
    pub ranks: usize,
}

impl Decomp {
    pub fn new(nx: usize, ny: usize, ranks: usize) -> Result<Self, XpicError> {
        if ranks == 0 || ny < ranks {
            return Err(XpicError::Decomposition { rows: ny, ranks });
        }
        Ok(Decomp { nx, ny, ranks })
    }

    /// Half-open row range `[start, end)` of `rank`.
    pub fn rows(&self, rank: usize) -> (usize, usize) {
        let base = self.ny / self.ranks;
        let start = rank * base;
        let end = if rank + 1 == self.ranks {
            self.ny
        } else {
            start + base
        };
        (start, end)
    }

    pub fn row_count(&self, rank: usize) -> usize {
        let (a, b) = self.rows(rank);
        b - a
    }

    pub fn owner(&self, row: usize) -> usize {
        let base = self.ny / self.ranks;
        (row / base).min(self.ranks - 1)
    }

    pub fn next(&self, rank: usize) -> usize {
        (rank + 1) % self.ranks
    }

    pub fn prev(&self, rank: usize) -> usize {
        (rank + self.ranks - 1) % self.ranks
    }

    /// Ranks of `other` whose rows overlap `rank`'s rows here, with the
    /// overlapping row ranges, in rank order.
    pub fn overlaps(&self, rank: usize, other: &Decomp) -> Vec<(usize, usize, usize)> {
        let (a, b) = self.rows(rank);
        (0..other.ranks)
            .filter_map(|r| {
                let (c, d) = other.rows(r);
                let lo = a.max(c);
                let hi = b.min(d);
                (lo < hi).then_some((r, lo, hi))
            })
            .collect()
    }
}

/// One rank's rows of the field solution.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBlock {
    pub nx: usize,
    pub row_start: usize,
    pub rows: usize,
    pub phi: Vec<f64>,
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub b: [f64; 3],
}

impl FieldBlock {
    pub fn zeros(nx: usize, row_start: usize, rows: usize, b: [f64; 3]) -> Self {
        let n = nx * rows;
        FieldBlock {
            nx,
            row_start,
            rows,
            phi: vec![0.0; n],
            ex: vec![0.0; n],
            ey: vec![0.0; n],
            b,
        }
    }

    /// B is the uniform static background; nothing evolves it.
    pub fn calculate_b(&mut self) {}
}

/// Charge density and current density (3 components) on a block of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub nx: usize,
    pub row_start: usize,
    pub rows: usize,
    pub rho: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
}

impl Moments {
    pub fn zeros(nx: usize, row_start: usize, rows: usize) -> Self {
        let n = nx * rows;
        Moments {
            nx,
            row_start,
            rows,
            rho: vec![0.0; n],
            jx: vec![0.0; n],
            jy: vec![0.0; n],
            jz: vec![0.0; n],
        }
    }

    pub fn planes(&self) -> [&Vec<f64>; 4] {
        [&self.rho, &self.jx, &self.jy, &self.jz]
    }

    pub fn planes_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.rho, &mut self.jx, &mut self.jy, &mut self.jz]
    }

    /// Copy of rows `[lo, hi)` (global indices) of this block.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Moments {
        let a = (lo - self.row_start) * self.nx;
        let b = (hi - self.row_start) * self.nx;
        Moments {
            nx: self.nx,
            row_start: lo,
            rows: hi - lo,
            rho: self.rho[a..b].to_vec(),
            jx: self.jx[a..b].to_vec(),
            jy: self.jy[a..b].to_vec(),
            jz: self.jz[a..b].to_vec(),
        }
    }

    /// Σ ρ·cell_area over the block.
    pub fn total_charge(&self, cell_area: f64) -> f64 {
        self.rho.iter().sum::<f64>() * cell_area
    }
}
