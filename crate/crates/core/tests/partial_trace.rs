use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unilab_core::tensorspace::partial_trace;
use unilab_core::verification::random_state;
use unilab_core::{SpaceLayout, C64};

/// Partial trace of `|ψ⟩⟨ψ|` by brute-force index loops over the full
/// density matrix.
fn brute_force(psi: &[C64], dims: &[usize], keep: &[usize]) -> DMatrix<C64> {
    let total: usize = dims.iter().product();
    let digits = |mut i: usize| -> Vec<usize> {
        let mut d = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            d[k] = i % dims[k];
            i /= dims[k];
        }
        d
    };
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let kept_index = |d: &[usize]| keep.iter().fold(0, |acc, &k| acc * dims[k] + d[k]);
    let mut out = DMatrix::from_element(kept_dim, kept_dim, C64::new(0.0, 0.0));
    for i in 0..total {
        let di = digits(i);
        for j in 0..total {
            let dj = digits(j);
            let traced_equal = (0..dims.len()).filter(|k| !keep.contains(k)).all(|k| di[k] == dj[k]);
            if traced_equal {
                out[(kept_index(&di), kept_index(&dj))] += psi[i] * psi[j].conj();
            }
        }
    }
    out
}

#[test]
fn matches_dense_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dims = vec![2, 3, 2, 4];
    let layout = Arc::new(SpaceLayout::new(dims.clone()).unwrap());
    let keeps: [&[usize]; 6] = [&[0], &[1], &[3], &[0, 2], &[1, 3], &[0, 1, 3]];
    for keep in keeps {
        let psi = random_state(layout.clone(), &mut rng);
        let fast = partial_trace(&psi, keep).unwrap();
        let slow = brute_force(psi.amplitudes(), &dims, keep);
        let err = (fast.matrix() - &slow).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-14, "{keep:?}: {err}");
    }
}

#[test]
fn keep_order_is_canonical() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layout = Arc::new(SpaceLayout::new(vec![2, 3, 2]).unwrap());
    let psi = random_state(layout, &mut rng);
    let a = partial_trace(&psi, &[2, 0]).unwrap();
    let b = partial_trace(&psi, &[0, 2, 2]).unwrap();
    assert_eq!(a, b);
    assert!(partial_trace(&psi, &[]).is_err());
}
