//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate partitions work into independent items
//! whose results are written to disjoint slots, so `Sequential` and
//! `Parallel` produce bit-identical output. Without the `parallel` feature,
//! `Parallel` runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    /// Picks `Sequential` when the estimated work is too small to amortize
    /// thread dispatch.
    pub fn for_work(self, work: usize) -> Exec {
        const MIN_PARALLEL_WORK: usize = 1 << 15;
        if work < MIN_PARALLEL_WORK {
            Exec::Sequential
        } else {
            self
        }
    }

    /// Calls `f(i, chunk)` for every `chunk_len`-sized chunk of `out`.
    pub fn for_each_chunk<F>(self, out: &mut [f64], chunk_len: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if chunk_len == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => out
                .par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
            _ => out
                .chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
        }
    }

    /// Maps `0..n` through `f`, preserving order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Applies `f` to every element of `items`.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            _ => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sin() * 1e3;
        assert_eq!(Exec::Sequential.map(1000, f), Exec::Parallel.map(1000, f));

        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        let g = |i: usize, c: &mut [f64]| c.iter_mut().for_each(|v| *v = i as f64);
        Exec::Sequential.for_each_chunk(&mut a, 8, g);
        Exec::Parallel.for_each_chunk(&mut b, 8, g);
        assert_eq!(a, b);
    }
}
