//! Execution policy for the data-parallel kernels.
//!
//! With the `parallel` feature (on by default) the kernels fan out over rayon's
//! global pool; without it every policy runs sequentially. Partitioning never
//! depends on the policy, so both produce identical results.

/// How a data-parallel kernel should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Evaluate `f` on `0..len`, collecting results in index order.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Fill `out[i] = f(i)` in place.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            }
            _ => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = f(i);
                }
            }
        }
    }
}
