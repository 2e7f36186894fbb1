//! Execution strategy for the data-parallel loops (EM, extraction, decoding).
//!
//! With the `parallel` feature the work is spread over rayon's pool; without
//! it every strategy runs on the calling thread. Results always come back in
//! input order, and reductions that sum floating point values are done over
//! fixed-size chunks merged left to right, so output is bit-identical across
//! strategies and thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per chunk for order-stable reductions.
pub const REDUCE_CHUNK: usize = 64;

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

/// Maps `f` over `items`, preserving order.
pub fn map<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over consecutive chunks of `chunk` items, preserving chunk order.
pub fn map_chunks<T, U, F>(exec: Exec, items: &[T], chunk: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> U + Sync + Send,
{
    let chunk = chunk.max(1);
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_chunks(chunk).map(f).collect(),
        _ => items.chunks(chunk).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Exec::Sequential, &xs, |x| x * x);
        let b = map(Exec::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);

        let fs: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let sum = |exec| -> f64 {
            map_chunks(exec, &fs, REDUCE_CHUNK, |c| c.iter().sum::<f64>())
                .into_iter()
                .sum()
        };
        assert_eq!(sum(Exec::Sequential).to_bits(), sum(Exec::Parallel).to_bits());
    }
}
