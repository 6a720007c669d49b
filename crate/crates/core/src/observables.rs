//! Purities, entropies, mutual information, observer position statistics,
//! well populations, interwell coherence and fragment redundancy.
//!
//! Entropies use the natural logarithm, so a maximally mixed qubit has
//! `S = ln 2`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{env_factor, observer_factor, GridSpec, QUBIT_FACTOR};
use crate::tensorspace::{partial_trace, DensityMatrix, SiteOperator, StateVector, C64, MAX_DENSE_REDUCED_DIM};

/// Eigenvalues below this are treated as exact zeros in `−p ln p`.
const ENTROPY_CUTOFF: f64 = 1e-12;
/// Eigenvalues below `−NEGATIVE_TOLERANCE` mark an invalid density matrix.
const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// `S(ρ) = −Tr ρ ln ρ` from the eigenvalues of `ρ`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_of_spectrum(&rho.eigenvalues())
}

pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    if let Some(&min) = eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < -NEGATIVE_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "density matrix has eigenvalue {min:e}"
            )));
        }
    }
    Ok(eigenvalues
        .iter()
        .filter(|&&p| p > ENTROPY_CUTOFF)
        .map(|&p| -p * p.ln())
        .sum())
}

fn check_factor_set(state: &StateVector, set: &[usize]) -> Result<Vec<usize>> {
    let n = state.layout().num_factors();
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != set.len() {
        return Err(Error::Usage("factor set contains duplicates".into()));
    }
    if s.is_empty() || s.iter().any(|&f| f >= n) {
        return Err(Error::Usage(format!("invalid factor set {set:?}")));
    }
    Ok(s)
}

/// Entropy of the reduced state on `set`. For a pure global state the
/// complement has the same entropy, so the smaller side is traced.
pub fn subsystem_entropy(state: &StateVector, set: &[usize]) -> Result<f64> {
    let set = check_factor_set(state, set)?;
    let layout = state.layout();
    let complement: Vec<usize> = (0..layout.num_factors()).filter(|f| !set.contains(f)).collect();
    if complement.is_empty() {
        return Ok(0.0);
    }
    let dim = |s: &[usize]| s.iter().fold(1usize, |acc, &f| acc.saturating_mul(layout.dim(f)));
    let side = if dim(&complement) < dim(&set) { complement } else { set };
    if dim(&side) > MAX_DENSE_REDUCED_DIM {
        return Err(Error::Resource(format!(
            "reduced dimension {} exceeds limit {MAX_DENSE_REDUCED_DIM}",
            dim(&side)
        )));
    }
    von_neumann_entropy(&partial_trace(state, &side)?)
}

/// `I(A:B) = S(ρ_A) + S(ρ_B) − S(ρ_AB)`.
pub fn mutual_information(state: &StateVector, part_a: &[usize], part_b: &[usize]) -> Result<f64> {
    let a = check_factor_set(state, part_a)?;
    let b = check_factor_set(state, part_b)?;
    if a.iter().any(|f| b.contains(f)) {
        return Err(Error::Usage(format!(
            "factor sets {part_a:?} and {part_b:?} overlap"
        )));
    }
    let mut ab = a.clone();
    ab.extend(&b);
    Ok(subsystem_entropy(state, &a)? + subsystem_entropy(state, &b)? - subsystem_entropy(state, &ab)?)
}

/// Left/right memory states built from the observer's lowest energy doublet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellBasis {
    pub left_state: Vec<f64>,
    pub right_state: Vec<f64>,
    pub overlap: f64,
    /// `E_1 − E_0`.
    pub doublet_splitting: f64,
    /// `E_2 − E_1`.
    pub excitation_gap: f64,
}

impl WellBasis {
    /// Doublet separated from the next level by at least 5× its splitting.
    pub fn is_well_separated(&self) -> bool {
        self.excitation_gap >= 5.0 * self.doublet_splitting
    }

    pub fn left_c64(&self) -> Vec<C64> {
        self.left_state.iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    pub fn right_c64(&self) -> Vec<C64> {
        self.right_state.iter().map(|&v| C64::new(v, 0.0)).collect()
    }
}

/// `<φ|x|φ>` for a real grid wavefunction.
pub fn position_expectation(phi: &[f64], grid: &GridSpec) -> f64 {
    phi.iter().enumerate().map(|(i, v)| v * v * grid.node(i)).sum()
}

/// Diagonalizes the observer Hamiltonian and forms `(|gs⟩ ∓ |1st⟩)/√2`,
/// sign-fixed so that the left state sits at negative `x`.
pub fn well_basis_from_hamiltonian(h_o: &SiteOperator, grid: &GridSpec) -> Result<WellBasis> {
    let n = h_o.dim();
    if n != grid.points {
        return Err(Error::Config(format!(
            "observer Hamiltonian has dimension {n}, grid has {} points",
            grid.points
        )));
    }
    let dense = DMatrix::<f64>::from_fn(n, n, |r, c| h_o.element(r, c).re);
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let col = |k: usize| -> Vec<f64> { eig.eigenvectors.column(order[k]).iter().copied().collect() };
    let mut gs = col(0);
    let first = col(1);
    if gs.iter().sum::<f64>() < 0.0 {
        gs.iter_mut().for_each(|v| *v = -*v);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut left: Vec<f64> = gs.iter().zip(&first).map(|(g, e)| s * (g - e)).collect();
    let mut right: Vec<f64> = gs.iter().zip(&first).map(|(g, e)| s * (g + e)).collect();
    if position_expectation(&left, grid) > 0.0 {
        std::mem::swap(&mut left, &mut right);
    }
    let overlap = left.iter().zip(&right).map(|(a, b)| a * b).sum::<f64>().abs();
    let e = |k: usize| eig.eigenvalues[order[k]];
    Ok(WellBasis {
        left_state: left,
        right_state: right,
        overlap,
        doublet_splitting: e(1) - e(0),
        excitation_gap: e(2) - e(1),
    })
}

/// Classicality diagnostics of one global state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalityReport {
    pub p_left: f64,
    pub p_right: f64,
    /// Population outside the doublet subspace, `1 − p_left − p_right`.
    pub doublet_residual: f64,
    /// `|<O_L|ρ_O|O_R>|`.
    pub coherence: f64,
    pub observer_purity: f64,
    pub qubit_purity: f64,
    pub mean_x: f64,
    /// Fraction of single-spin fragments with `I(Q:E_k) > S(ρ_Q)/2`.
    pub redundancy: Option<f64>,
}

impl ClassicalityReport {
    pub fn winning_population(&self) -> f64 {
        self.p_left.max(self.p_right)
    }
}

/// Report plus the observer's position distribution `ρ_O(i, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverStatistics {
    pub report: ClassicalityReport,
    pub distribution: Vec<f64>,
}

pub fn observer_statistics(state: &StateVector, grid: &GridSpec, wells: &WellBasis) -> Result<ObserverStatistics> {
    let layout = state.layout();
    let n_env = layout.num_factors() - 2;
    let obs = observer_factor(n_env);
    if layout.dim(obs) != grid.points {
        return Err(Error::Config("grid does not match observer factor".into()));
    }
    let rho_o = partial_trace(state, &[obs])?;
    let rho_q = partial_trace(state, &[QUBIT_FACTOR])?;
    let distribution: Vec<f64> = (0..grid.points).map(|i| rho_o.matrix()[(i, i)].re).collect();
    let mean_x = distribution.iter().enumerate().map(|(i, p)| p * grid.node(i)).sum();
    let l = wells.left_c64();
    let r = wells.right_c64();
    let p_left = rho_o.sandwich(&l, &l).re;
    let p_right = rho_o.sandwich(&r, &r).re;
    let coherence = rho_o.sandwich(&l, &r).norm();
    Ok(ObserverStatistics {
        report: ClassicalityReport {
            p_left,
            p_right,
            doublet_residual: 1.0 - p_left - p_right,
            coherence,
            observer_purity: purity(&rho_o),
            qubit_purity: purity(&rho_q),
            mean_x,
            redundancy: None,
        },
        distribution,
    })
}

/// Mutual information statistics for one fragment size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyPoint {
    pub fragment_size: usize,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyCurve {
    pub qubit_entropy: f64,
    pub points: Vec<RedundancyPoint>,
    /// Per-spin `I(Q:E_k)`, exhaustive.
    pub single_spin_information: Vec<f64>,
    /// Fraction of single spins with `I(Q:E_k) > S(ρ_Q)/2`.
    pub single_spin_fraction: f64,
}

pub const DEFAULT_FRAGMENT_SAMPLES: usize = 50;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Partial-information curve `I(Q : F)` over environment fragments `F`.
///
/// Sizes with at most `samples` distinct fragments are enumerated
/// exhaustively, larger ones are sampled with a seeded generator.
pub fn redundancy_scan(state: &StateVector, fragment_sizes: &[usize], samples: usize, seed: u64) -> Result<RedundancyCurve> {
    let n_env = state.layout().num_factors() - 2;
    if let Some(&bad) = fragment_sizes.iter().find(|&&f| f == 0 || f > n_env) {
        return Err(Error::Usage(format!(
            "fragment size {bad} outside 1..={n_env}"
        )));
    }
    let s_q = subsystem_entropy(state, &[QUBIT_FACTOR])?;
    let info = |fragment: &[usize]| -> Result<f64> {
        let factors: Vec<usize> = fragment.iter().map(|&j| env_factor(j)).collect();
        mutual_information(state, &[QUBIT_FACTOR], &factors)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(fragment_sizes.len());
    for &f in fragment_sizes {
        let fragments: Vec<Vec<usize>> = if binomial(n_env, f) <= samples.max(1) as u128 {
            all_subsets(n_env, f)
        } else {
            (0..samples)
                .map(|_| {
                    let mut v = sample(&mut rng, n_env, f).into_vec();
                    v.sort_unstable();
                    v
                })
                .collect()
        };
        let values = fragments.iter().map(|fr| info(fr)).collect::<Result<Vec<f64>>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        points.push(RedundancyPoint {
            fragment_size: f,
            samples: values.len(),
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let single = (0..n_env).map(|j| info(&[j])).collect::<Result<Vec<f64>>>()?;
    let fraction = if n_env == 0 || s_q <= ENTROPY_CUTOFF {
        0.0
    } else {
        single.iter().filter(|&&i| i > 0.5 * s_q).count() as f64 / n_env as f64
    };
    Ok(RedundancyCurve {
        qubit_entropy: s_q,
        points,
        single_spin_information: single,
        single_spin_fraction: fraction,
    })
}

/// Indices of the snapshots inside the trailing `fraction` of the time span.
pub fn trailing_window(times: &[f64], fraction: f64) -> std::ops::Range<usize> {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return 0..0;
    };
    let start_time = t1 - fraction * (t1 - t0);
    let start = times.iter().position(|&t| t >= start_time - 1e-12).unwrap_or(times.len());
    start..times.len()
}

/// Mean of `values` over the trailing `fraction` of the run.
pub fn trailing_mean(times: &[f64], values: &[f64], fraction: f64) -> Option<f64> {
    let w = trailing_window(times, fraction);
    if w.is_empty() {
        return None;
    }
    let n = w.len() as f64;
    Some(values[w].iter().sum::<f64>() / n)
}

/// Maximum of `|⟨x⟩(t) − ⟨x⟩(t_final)|` over the trailing window; `None`
/// when fewer than 10 snapshots fall inside it.
pub fn stability_metric(times: &[f64], mean_x: &[f64], window: f64) -> Option<f64> {
    let w = trailing_window(times, window);
    if w.len() < 10 {
        return None;
    }
    let last = *mean_x.last()?;
    Some(mean_x[w].iter().map(|x| (x - last).abs()).fold(0.0, f64::max))
}

/// Default trailing stability window (last quarter of the run).
pub const STABILITY_WINDOW: f64 = 0.25;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{observer_hamiltonian, PhysicalParams};
    use crate::tensorspace::{random_product_state, FactorSpec, SpaceLayout};
    use std::sync::Arc;

    fn diag_rho(p: &[f64]) -> DensityMatrix {
        let n = p.len();
        DensityMatrix::from_matrix(DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(p[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
        .unwrap()
    }

    #[test]
    fn purity_reference_values() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pure = DensityMatrix::pure(&[C64::new(s, 0.0), C64::new(0.0, s)]);
        assert!((purity(&pure) - 1.0).abs() < 1e-15);
        assert!((purity(&diag_rho(&[0.5, 0.5])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_reference_values() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pure = DensityMatrix::pure(&[C64::new(s, 0.0), C64::new(0.0, s)]);
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-12);
        let mixed = von_neumann_entropy(&diag_rho(&[0.5, 0.5])).unwrap();
        assert!((mixed - std::f64::consts::LN_2).abs() < 1e-14);
        // −0.9 ln 0.9 − 0.1 ln 0.1
        let s = von_neumann_entropy(&diag_rho(&[0.9, 0.1])).unwrap();
        assert!((s - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn negative_spectrum_rejected() {
        assert!(matches!(entropy_of_spectrum(&[1.1, -0.1]), Err(Error::InvalidState(_))));
        assert!(entropy_of_spectrum(&[1.0 + 1e-10, -1e-10]).is_ok());
    }

    #[test]
    fn bell_pair_mutual_information() {
        let l = Arc::new(SpaceLayout::new(vec![2, 2]).unwrap());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let psi = StateVector::from_amplitudes(l, vec![C64::new(s, 0.0), z, z, C64::new(s, 0.0)]).unwrap();
        let i = mutual_information(&psi, &[0], &[1]).unwrap();
        assert!((i - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(mutual_information(&psi, &[0], &[0]), Err(Error::Usage(_))));
    }

    #[test]
    fn product_state_has_no_information() {
        let l = Arc::new(SpaceLayout::universe(3, 32).unwrap());
        let specs = vec![FactorSpec::Haar; 5];
        let psi = random_product_state(l, 3, &specs).unwrap();
        assert!(mutual_information(&psi, &[0], &[1, 2]).unwrap().abs() < 1e-10);
        let curve = redundancy_scan(&psi, &[1, 2, 3], 50, 0).unwrap();
        for p in &curve.points {
            assert!(p.mean.abs() < 1e-10 && p.max.abs() < 1e-10);
        }
        assert_eq!(curve.single_spin_fraction, 0.0);
    }

    #[test]
    fn ghz_single_spin_information_is_ln2() {
        // (|0⟩|00..0⟩ + |1⟩|11..1⟩)/√2 ⊗ |x_0⟩
        let n_env = 4;
        let l = Arc::new(SpaceLayout::universe(n_env, 32).unwrap());
        let mut amps = vec![C64::new(0.0, 0.0); l.total_dim()];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        amps[l.flat_index(&[0, 0, 0, 0, 0, 0])] = C64::new(s, 0.0);
        amps[l.flat_index(&[1, 1, 1, 1, 1, 0])] = C64::new(s, 0.0);
        let psi = StateVector::from_amplitudes(l, amps).unwrap();
        let curve = redundancy_scan(&psi, &[1, 2, 4], 50, 1).unwrap();
        assert!((curve.qubit_entropy - std::f64::consts::LN_2).abs() < 1e-12);
        for i in &curve.single_spin_information {
            assert!((i - std::f64::consts::LN_2).abs() < 1e-10);
        }
        assert_eq!(curve.single_spin_fraction, 1.0);
        // the whole environment holds the full 2 S(ρ_Q)
        let full = curve.points.iter().find(|p| p.fragment_size == 4).unwrap();
        assert!((full.mean - 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn fragment_enumeration() {
        assert_eq!(all_subsets(4, 2).len(), 6);
        assert_eq!(all_subsets(5, 5), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(binomial(8, 4), 70);
    }

    fn default_wells() -> (WellBasis, GridSpec) {
        let p = PhysicalParams::defaults(2);
        let h = observer_hamiltonian(&p).unwrap();
        (well_basis_from_hamiltonian(&h, &p.grid()).unwrap(), p.grid())
    }

    #[test]
    fn well_basis_parity_symmetry() {
        let (w, g) = default_wells();
        let xl = position_expectation(&w.left_state, &g);
        let xr = position_expectation(&w.right_state, &g);
        assert!(xl < 0.0);
        assert!((xl + xr).abs() < 1e-8);
        assert!(w.overlap < 1e-3);
        let norm: f64 = w.left_state.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn well_basis_default_location() {
        // Dense diagonalization at the default (a, b, m, N_x, L) gives
        // ⟨O_L|x|O_L⟩ = −0.94283: the default well is too shallow for the
        // doublet to sit at the classical minimum −1.25.
        let (w, g) = default_wells();
        let xl = position_expectation(&w.left_state, &g);
        assert!((xl + 0.942_830_34).abs() < 1e-6, "{xl}");
        assert!(!w.is_well_separated());
    }

    #[test]
    fn deep_well_doublet_is_nearly_degenerate() {
        let mut p = PhysicalParams::defaults(1);
        p.a_well = 4.0;
        p.b_well = 0.32;
        p.grid_points = 256;
        let h = observer_hamiltonian(&p).unwrap();
        let w = well_basis_from_hamiltonian(&h, &p.grid()).unwrap();
        assert!(w.doublet_splitting < 0.01 * w.excitation_gap);
        assert!(w.is_well_separated());
        let xl = position_expectation(&w.left_state, &p.grid());
        assert!((xl + p.well_minimum()).abs() < 0.15);
    }

    #[test]
    fn observer_in_left_state() {
        let (w, g) = default_wells();
        let l = Arc::new(SpaceLayout::universe(2, g.points).unwrap());
        let left = w.left_c64();
        let psi = random_product_state(
            l,
            5,
            &[FactorSpec::Haar, FactorSpec::Haar, FactorSpec::Haar, FactorSpec::Amplitudes(left)],
        )
        .unwrap();
        let stats = observer_statistics(&psi, &g, &w).unwrap();
        let r = &stats.report;
        assert!((r.p_left - 1.0).abs() < 1e-12);
        assert!(r.coherence < 1e-12);
        assert!((r.mean_x - position_expectation(&w.left_state, &g)).abs() < 1e-12);
        assert!((stats.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observer_in_cat_state() {
        let (w, g) = default_wells();
        let l = Arc::new(SpaceLayout::universe(1, g.points).unwrap());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cat: Vec<C64> = w
            .left_state
            .iter()
            .zip(&w.right_state)
            .map(|(a, b)| C64::new(s * (a + b), 0.0))
            .collect();
        let psi = random_product_state(l, 1, &[FactorSpec::Basis(0), FactorSpec::Haar, FactorSpec::Amplitudes(cat)])
            .unwrap();
        let r = observer_statistics(&psi, &g, &w).unwrap().report;
        assert!((r.p_left - 0.5).abs() < 1e-12);
        assert!((r.p_right - 0.5).abs() < 1e-12);
        assert!((r.coherence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stability_metric_cases() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let flat = vec![0.3; times.len()];
        assert_eq!(stability_metric(&times, &flat, 0.25), Some(0.0));
        let amp = 0.4;
        // period 0.5 ≪ window 2.5; series ends at a zero of sin
        let wave: Vec<f64> = times.iter().map(|t| amp * (2.0 * std::f64::consts::PI * t / 0.5 + 0.3).sin()).collect();
        let m = stability_metric(&times, &wave, 0.25).unwrap();
        assert!(m <= 2.0 * amp + 1e-12 && m > amp);
        assert_eq!(stability_metric(&times[..5], &flat[..5], 0.25), None);
    }

    #[test]
    fn trailing_window_bounds() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let w = trailing_window(&times, 0.25);
        assert!((times[w.start] - 3.8).abs() < 1e-9);
        assert_eq!(w.end, 51);
        let v: Vec<f64> = times.clone();
        assert!((trailing_mean(&times, &v, 0.5).unwrap() - 3.75).abs() < 1e-9);
    }
}
