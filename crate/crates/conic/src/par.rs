//! Parallel accumulation with a fixed reduction order, so results do not depend on scheduling.

use std::ops::Range;

use rayon::prelude::*;

const CHUNK: usize = 256;

/// Sums `f(range, acc)` contributions over fixed chunks of `0..len`; partials are added in chunk order.
pub fn chunked_sum(len: usize, width: usize, f: impl Fn(Range<usize>, &mut [f64]) + Sync) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            f(c * CHUNK..((c + 1) * CHUNK).min(len), &mut acc);
            acc
        })
        .collect();
    let mut out = vec![0.0; width];
    for p in parts {
        out.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    out
}
