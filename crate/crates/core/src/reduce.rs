//! Order-fixed reductions: partial sums are produced in parallel, then added
//! sequentially in index order so results do not depend on thread count.

use rayon::prelude::*;

pub fn ordered_sum(parts: Vec<f64>) -> f64 {
    parts.into_iter().fold(0.0, |a, b| a + b)
}

/// Evaluates `f` for each of `n` slabs in parallel and adds the partial
/// results in slab order.
pub fn sum_slabs<const N: usize, F>(n: usize, f: F) -> [f64; N]
where
    F: Fn(usize) -> [f64; N] + Sync,
{
    let parts: Vec<[f64; N]> = (0..n).into_par_iter().map(&f).collect();
    let mut acc = [0.0; N];
    for p in parts {
        for i in 0..N {
            acc[i] += p[i];
        }
    }
    acc
}
