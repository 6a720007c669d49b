//! Seeded self-checks shared by the `accept` command and the test suites.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonian::{build_total_hamiltonian, PhysicalParams, TermMask};
use crate::observables::{mutual_information, purity, von_neumann_entropy};
use crate::tensorspace::{kron_assemble, partial_trace, SpaceLayout, StateVector, C64};

/// Normalized state with i.i.d. complex Gaussian amplitudes.
pub fn random_state(layout: Arc<SpaceLayout>, rng: &mut impl Rng) -> StateVector {
    let n = layout.total_dim();
    let mut amps: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|z| *z /= norm);
    StateVector::from_amplitudes(layout, amps).expect("length matches layout")
}

/// Largest entry of `|H_dense v − H_free v|` over `n_vectors` random vectors.
pub fn matrix_free_vs_dense(params: &PhysicalParams, n_vectors: usize, seed: u64) -> Result<f64> {
    let layout = Arc::new(params.layout()?);
    let ham = build_total_hamiltonian(params, layout.clone(), TermMask::ALL)?;
    let dense = kron_assemble(&layout, &ham.product_terms())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_vectors {
        let v = random_state(layout.clone(), &mut rng);
        let free = ham.apply(&v);
        let reference = &dense * nalgebra::DVector::from_column_slice(v.amplitudes());
        for (a, b) in free.amplitudes().iter().zip(reference.iter()) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub states: usize,
    pub bipartitions: usize,
    /// max `|S(ρ_A) − S(ρ_rest)|`.
    pub schmidt_max_error: f64,
    /// Most negative mutual information seen.
    pub min_mutual_information: f64,
    /// max `I(A:F) − I(A:F ∪ G)` (positive means a violation).
    pub monotonicity_violation: f64,
    /// max distance outside `[1/d, 1]` of any reduced purity.
    pub purity_bound_violation: f64,
    pub max_trace_error: f64,
    pub max_hermitian_error: f64,
    pub min_eigenvalue: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.bipartitions >= 50
            && self.schmidt_max_error < 1e-8
            && self.min_mutual_information > -1e-10
            && self.monotonicity_violation < 1e-10
            && self.purity_bound_violation < 1e-12
            && self.max_trace_error < 1e-12
            && self.max_hermitian_error < 1e-12
            && self.min_eigenvalue > -1e-12
    }
}

fn random_layout(rng: &mut impl Rng) -> Arc<SpaceLayout> {
    loop {
        let n = rng.random_range(2..=6);
        let dims: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        if dims.iter().product::<usize>() <= 256 {
            return Arc::new(SpaceLayout::new(dims).expect("dims >= 2"));
        }
    }
}

/// Entropy, mutual-information, purity and partial-trace properties on
/// `bipartitions` random states over random layouts of dimension <= 256.
pub fn property_suite(bipartitions: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PropertyReport {
        min_mutual_information: f64::INFINITY,
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    for _ in 0..bipartitions {
        let layout = random_layout(&mut rng);
        let psi = random_state(layout.clone(), &mut rng);
        let n = layout.num_factors();
        rep.states += 1;

        let k = rng.random_range(1..n);
        let mut a = sample(&mut rng, n, k).into_vec();
        a.sort_unstable();
        let rest: Vec<usize> = (0..n).filter(|f| !a.contains(f)).collect();
        let rho_a = partial_trace(&psi, &a)?;
        let rho_b = partial_trace(&psi, &rest)?;
        rep.schmidt_max_error = rep
            .schmidt_max_error
            .max((von_neumann_entropy(&rho_a)? - von_neumann_entropy(&rho_b)?).abs());
        rep.bipartitions += 1;

        for rho in [&rho_a, &rho_b] {
            let p = purity(rho);
            let d = rho.dim() as f64;
            rep.purity_bound_violation = rep.purity_bound_violation.max((1.0 / d - p).max(p - 1.0)).max(0.0);
            rep.max_trace_error = rep.max_trace_error.max((rho.trace() - C64::new(1.0, 0.0)).norm());
            rep.max_hermitian_error = rep.max_hermitian_error.max(rho.max_hermitian_error());
            let min_ev = rho.eigenvalues().first().copied().unwrap_or(0.0);
            rep.min_eigenvalue = rep.min_eigenvalue.min(min_ev);
        }

        if n >= 3 {
            // Nested fragments F ⊂ F ∪ G drawn from the factors outside {0}.
            let others: Vec<usize> = (1..n).collect();
            let take = rng.random_range(1..others.len());
            let small: Vec<usize> = others[..take].to_vec();
            let i_small = mutual_information(&psi, &[0], &small)?;
            let i_large = mutual_information(&psi, &[0], &others)?;
            rep.min_mutual_information = rep.min_mutual_information.min(i_small).min(i_large);
            rep.monotonicity_violation = rep.monotonicity_violation.max(i_small - i_large);
        }
    }
    if rep.min_mutual_information == f64::INFINITY {
        rep.min_mutual_information = 0.0;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_state_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Arc::new(SpaceLayout::new(vec![2, 3, 4]).unwrap());
        assert!((random_state(l, &mut rng).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_property_suite_passes() {
        let rep = property_suite(50, 11).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
