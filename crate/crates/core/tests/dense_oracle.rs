//! The matrix-free Hamiltonian against a dense matrix assembled here from
//! the raw parameters with explicit Kronecker products.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unilab_core::hamiltonian::{build_total_hamiltonian, PhysicalParams, QeAxis, TermMask};
use unilab_core::tensorspace::{kron_assemble, ProductTerm, SiteOperator, OperatorSum};
use unilab_core::verification::random_state;
use unilab_core::{SpaceLayout, C64};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

/// `I ⊗ … ⊗ op_k ⊗ … ⊗ I` with the first factor outermost.
fn embed(dims: &[usize], ops: &[(usize, DMatrix<C64>)]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, c(1.0));
    for (k, &d) in dims.iter().enumerate() {
        let m = ops
            .iter()
            .find(|(f, _)| *f == k)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| DMatrix::identity(d, d));
        out = out.kronecker(&m);
    }
    out
}

fn reference_hamiltonian(p: &PhysicalParams) -> DMatrix<C64> {
    let n = p.n_env();
    let nx = p.grid_points;
    let mut dims = vec![2; n + 1];
    dims.push(nx);
    let obs = n + 1;
    let dx = 2.0 * p.grid_half_width / nx as f64;
    let xs: Vec<f64> = (0..nx).map(|i| -p.grid_half_width + (i as f64 + 0.5) * dx).collect();
    let mut h_o = DMatrix::from_element(nx, nx, c(0.0));
    let mut x_op = DMatrix::from_element(nx, nx, c(0.0));
    for i in 0..nx {
        let v = -p.a_well * xs[i].powi(2) + p.b_well * xs[i].powi(4);
        h_o[(i, i)] = c(1.0 / (p.mass * dx * dx) + v);
        x_op[(i, i)] = c(xs[i]);
        if i + 1 < nx {
            h_o[(i, i + 1)] = c(-0.5 / (p.mass * dx * dx));
            h_o[(i + 1, i)] = c(-0.5 / (p.mass * dx * dx));
        }
    }
    let bath_axis = match p.qe_axis {
        QeAxis::Zz => pauli_z(),
        QeAxis::Zx => pauli_x(),
    };
    let mut h = embed(&dims, &[(0, pauli_z() * c(p.omega0 / 2.0))]);
    for j in 0..n {
        h += embed(&dims, &[(1 + j, pauli_z() * c(p.omega_env[j] / 2.0))]);
        h += embed(&dims, &[(0, pauli_z() * c(p.g_env[j])), (1 + j, bath_axis.clone())]);
        h += embed(&dims, &[(1 + j, pauli_z() * c(p.kappa_eo[j])), (obs, x_op.clone())]);
    }
    h += embed(&dims, &[(obs, h_o)]);
    h += embed(&dims, &[(0, pauli_z() * c(p.lambda_qo)), (obs, x_op)]);
    h
}

fn small(n_env: usize, nx: usize, half_width: f64, axis: QeAxis) -> PhysicalParams {
    let mut p = PhysicalParams::defaults(n_env);
    p.grid_points = nx;
    p.grid_half_width = half_width;
    p.qe_axis = axis;
    p
}

#[test]
fn full_hamiltonian_matches_kronecker_reference() {
    for axis in [QeAxis::Zx, QeAxis::Zz] {
        for (n_env, nx, half_width) in [(3, 16, 2.4), (2, 8, 1.2)] {
            let p = small(n_env, nx, half_width, axis);
            let layout = Arc::new(p.layout().unwrap());
            let ham = build_total_hamiltonian(&p, layout.clone(), TermMask::ALL).unwrap();
            let reference = reference_hamiltonian(&p);
            let assembled = kron_assemble(&layout, &ham.product_terms()).unwrap();
            let entry_err = (&assembled - &reference).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(entry_err < 1e-12, "{axis} N_E={n_env}: {entry_err}");

            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let v = random_state(layout.clone(), &mut rng);
                let free = ham.apply(&v);
                let dense = &reference * nalgebra::DVector::from_column_slice(v.amplitudes());
                let err = free.amplitudes().iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12, "{axis} N_E={n_env}: {err}");
            }
        }
    }
}

#[test]
fn random_dense_product_term_on_mixed_dims() {
    let layout = Arc::new(SpaceLayout::new(vec![2, 2, 4]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = random_state(Arc::new(SpaceLayout::new(vec![4]).unwrap()), &mut rng);
    let b = random_state(Arc::new(SpaceLayout::new(vec![16]).unwrap()), &mut rng);
    let m2 = SiteOperator::dense(2, a.amplitudes().to_vec()).unwrap();
    let m4 = SiteOperator::dense(4, b.amplitudes().to_vec()).unwrap();
    let term = ProductTerm::new(0.7, vec![(0, m2.clone()), (2, m4.clone())]).unwrap();
    let reference = embed(&[2, 2, 4], &[(0, m2.to_dense() * c(0.7)), (2, m4.to_dense())]);
    let op = OperatorSum::new(layout.clone(), &[term]).unwrap();
    for _ in 0..10 {
        let v = random_state(layout.clone(), &mut rng);
        let dense = &reference * nalgebra::DVector::from_column_slice(v.amplitudes());
        let err = op.apply(&v).amplitudes().iter().zip(dense.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }
}

#[test]
fn layout_index_convention() {
    let l = SpaceLayout::universe(3, 16).unwrap();
    // Q slowest, O fastest: i = ((q·2^N_E) + e)·N_x + x.
    assert_eq!(l.flat_index(&[1, 0, 1, 1, 5]), ((2 * 2 * 2) + 0b011) * 16 + 5);
    assert_eq!(l.local_index(((8 + 3) * 16) + 5, 4), 5);
    assert_eq!(l.local_index(((8 + 3) * 16) + 5, 1), 0);
    assert_eq!(l.local_index(((8 + 3) * 16) + 5, 0), 1);
}
