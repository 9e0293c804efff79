//! Execution mode for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through [`Exec::map`], which
//! evaluates an index-addressed closure and returns results in index order.
//! Results never depend on the mode: each element is computed by the same
//! sequential code, only the scheduling differs. Without the `parallel`
//! feature, [`Exec::Parallel`] falls back to a plain loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

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
    /// `true` when this build can actually run loops on a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills consecutive `chunk`-sized pieces of `out`; `f` receives the
    /// chunk index and the mutable chunk.
    pub fn for_each_chunk<F>(self, out: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if chunk == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Picks `Sequential` for small workloads so thread dispatch does not
    /// dominate.
    pub fn for_work(self, flops: usize) -> Exec {
        if flops < PARALLEL_MIN_WORK {
            Exec::Sequential
        } else {
            self
        }
    }
}

const PARALLEL_MIN_WORK: usize = 1 << 16;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(Exec::Sequential.map(1000, f), Exec::Parallel.map(1000, f));

        let mut a = vec![0.0; 100];
        let mut b = vec![0.0; 100];
        Exec::Sequential.for_each_chunk(&mut a, 7, |i, c| c.iter_mut().for_each(|x| *x = i as f64));
        Exec::Parallel.for_each_chunk(&mut b, 7, |i, c| c.iter_mut().for_each(|x| *x = i as f64));
        assert_eq!(a, b);
    }
}
