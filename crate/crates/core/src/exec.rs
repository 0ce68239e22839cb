//! Data-parallel execution policy for per-particle loops.
//!
//! Both policies produce bit-identical results: reductions are split into
//! fixed-size chunks whose partial sums are combined in chunk order.

/// Chunk length for reductions over particles.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` when the crate was built with the `parallel` feature.
    pub fn effective(self) -> Exec {
        if cfg!(feature = "parallel") {
            self
        } else {
            Exec::Sequential
        }
    }

    /// Apply `f(offset, chunk)` to each `CHUNK`-sized piece of `data` and
    /// return the per-chunk results in chunk order.
    pub fn map_chunks<T, R, F>(self, data: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut [T]) -> R + Sync + Send,
    {
        match self.effective() {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                data.par_chunks_mut(CHUNK)
                    .enumerate()
                    .map(|(i, c)| f(i * CHUNK, c))
                    .collect()
            }
            _ => data
                .chunks_mut(CHUNK)
                .enumerate()
                .map(|(i, c)| f(i * CHUNK, c))
                .collect(),
        }
    }

    /// Sum `f(i)` over `0..n`: sequential within each chunk, chunk partials
    /// added left to right.
    pub fn chunked_sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        let partial = |c: usize| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).fold(0.0, |acc, i| acc + f(i))
        };
        let partials: Vec<f64> = match self.effective() {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..chunks).into_par_iter().map(partial).collect()
            }
            _ => (0..chunks).map(partial).collect(),
        };
        partials.iter().fold(0.0, |a, b| a + b)
    }

    /// Map over items, preserving order.
    pub fn map<I, O, F>(self, items: Vec<I>, f: F) -> Vec<O>
    where
        I: Send,
        O: Send,
        F: Fn(I) -> O + Sync + Send,
    {
        match self.effective() {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            _ => items.into_iter().map(f).collect(),
        }
    }
}
