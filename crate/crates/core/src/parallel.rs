//! Data-parallel replicate loops with a sequential fallback.
//!
//! Results are always collected in index order, so the output of a map does
//! not depend on the number of worker threads.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, otherwise `Sequential`.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

pub fn map_range<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => par_map(n, f),
    }
}

/// Like [`map_range`] but hands every call a per-worker scratch value.
pub fn map_range_with<S, T, I, F>(n: usize, exec: Execution, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => {
            let mut scratch = init();
            (0..n).map(|j| f(&mut scratch, j)).collect()
        }
        Execution::Parallel => par_map_with(n, init, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_with<S, T, I, F>(n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map_init(init, f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_with<S, T, I, F>(n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    let mut scratch = init();
    (0..n).map(|j| f(&mut scratch, j)).collect()
}

/// Run `f` on a dedicated pool with `workers` threads (0 means the rayon default).
#[cfg(feature = "parallel")]
pub fn with_workers<R, F>(workers: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, F>(workers: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let _ = workers;
    let _: Option<Error> = None;
    Ok(f())
}

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_range(1000, Execution::Parallel, |j| j * j);
        let b = map_range(1000, Execution::Sequential, |j| j * j);
        assert_eq!(a, b);
    }

    #[test]
    fn scratch_variant_matches() {
        let a = map_range_with(257, Execution::Parallel, Vec::<usize>::new, |buf, j| {
            buf.clear();
            buf.extend(0..j % 7);
            buf.iter().sum::<usize>() + j
        });
        let b: Vec<usize> = (0..257).map(|j| (0..j % 7).sum::<usize>() + j).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn pools_of_any_size_agree() {
        let one = with_workers(1, || map_range(300, Execution::Parallel, |j| (j as f64).sqrt())).unwrap();
        let many = with_workers(8, || map_range(300, Execution::Parallel, |j| (j as f64).sqrt())).unwrap();
        assert_eq!(one, many);
    }
}
