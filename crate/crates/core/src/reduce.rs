//! Order-deterministic reductions.
//!
//! Per-sample terms are always materialised in sample-index order (parallel
//! `collect` preserves order) and then folded with a fixed-shape pairwise
//! tree, so the result depends only on the data and never on how many
//! workers produced it.

use num_complex::Complex64;
use std::ops::Add;

const LEAF: usize = 8;

fn pairwise<T: Copy + Add<Output = T>>(xs: &[T], zero: T) -> T {
    if xs.len() <= LEAF {
        return xs.iter().fold(zero, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid], zero) + pairwise(&xs[mid..], zero)
}

/// Pairwise sum with split point `len / 2` and sequential leaves of at most 8 terms.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise(xs, 0.0)
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    pairwise(xs, Complex64::new(0.0, 0.0))
}

/// Sample mean through [`pairwise_sum`]. Returns 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

pub fn mean_complex(xs: &[Complex64]) -> Complex64 {
    if xs.is_empty() {
        Complex64::new(0.0, 0.0)
    } else {
        pairwise_sum_complex(xs) / xs.len() as f64
    }
}

/// Runs `f` on a dedicated rayon pool with `workers` threads (0 means the
/// global default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn small_sums_are_sequential() {
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(mean(&[1.0, 3.0]), 2.0);
    }

    #[test]
    fn antisymmetric_halves_cancel_exactly() {
        let xs: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin() * 1e3).collect();
        let mut all = xs.clone();
        all.extend(xs.iter().map(|x| -x));
        assert_eq!(pairwise_sum(&all), 0.0);
    }

    #[test]
    fn independent_of_worker_count() {
        let terms = |workers| {
            with_workers(workers, || {
                (0..10_001)
                    .into_par_iter()
                    .map(|i| ((i as f64) * 1.3).cos() / (1.0 + i as f64))
                    .collect::<Vec<_>>()
            })
        };
        let a = pairwise_sum(&terms(1));
        let b = pairwise_sum(&terms(8));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
