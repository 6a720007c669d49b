//! Deterministic data-parallel kernels.
//!
//! Reductions are split into fixed-size chunks whose partial sums are
//! combined sequentially in chunk order, so results do not depend on the
//! thread count or on work stealing.

use num_complex::Complex64;
use rayon::prelude::*;

/// Work unit for parallel loops over amplitude arrays.
pub const CHUNK: usize = 4096;

/// `<a|b> = sum_i conj(a_i) b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "inner product length mismatch");
    let partials: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
        })
        .collect();
    partials.into_iter().fold(Complex64::new(0.0, 0.0), |acc, p| acc + p)
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    partials.into_iter().sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(cy, cx)| {
            for (yi, xi) in cy.iter_mut().zip(cx) {
                *yi += alpha * xi;
            }
        });
}

pub fn scale(alpha: Complex64, y: &mut [Complex64]) {
    y.par_chunks_mut(CHUNK).for_each(|c| {
        for yi in c {
            *yi *= alpha;
        }
    });
}

/// Weighted real sum `sum_i w_i |a_i|^2`.
pub fn weighted_norm_sqr(a: &[Complex64], weight: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * CHUNK;
            chunk
                .iter()
                .enumerate()
                .map(|(k, z)| weight(base + k) * z.norm_sqr())
                .sum::<f64>()
        })
        .collect();
    partials.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_matches_sequential_sum() {
        let a: Vec<Complex64> = (0..10_000)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let b: Vec<Complex64> = (0..10_000)
            .map(|i| Complex64::new((i as f64 * 0.7).cos(), 0.1 * i as f64 / 1e4))
            .collect();
        let seq = a
            .iter()
            .zip(&b)
            .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y);
        assert!((inner(&a, &b) - seq).norm() < 1e-9);
        assert!((norm_sqr(&a) - inner(&a, &a).re).abs() < 1e-9);
    }

    #[test]
    fn reductions_are_bit_stable_across_pools() {
        let a: Vec<Complex64> = (0..50_000)
            .map(|i| Complex64::new(1.0 / (1.0 + i as f64), (i as f64).sqrt()))
            .collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = one.install(|| norm_sqr(&a));
        let r4 = four.install(|| norm_sqr(&a));
        assert_eq!(r1.to_bits(), r4.to_bits());
    }
}
