//! Order-fixed reductions and path-chunk scheduling.
//!
//! Parallel work is split into fixed-size chunks of consecutive path
//! indices; chunk results are combined in index order. The chunk size is a
//! constant, so results do not depend on the number of worker threads.

use rayon::prelude::*;

pub const CHUNK: usize = 512;

/// Pairwise summation.
pub fn sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    sum(&xs[..mid]) + sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    sum(xs) / xs.len() as f64
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    let mu = mean(xs);
    if m < 2 {
        return (mu, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    let var = sum(&dev) / (m - 1) as f64;
    (mu, (var / m as f64).sqrt())
}

/// Runs `f` on each chunk `[start, end)` of `0..count` in parallel and
/// returns the chunk results in order.
pub fn map_chunks<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK, ((c + 1) * CHUNK).min(count)))
        .collect()
}
