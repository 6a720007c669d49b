//! Composite Hilbert-space layout, state vectors, matrix-free Kronecker
//! operators and partial traces.
//!
//! The flat amplitude index is row-major over the factor list: the first
//! factor varies slowest and the last one fastest. For the simulated
//! universe the factors are `Q, E_1 .. E_N, O`, so the observer grid is
//! contiguous in memory.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::par;

pub type C64 = Complex64;

/// Largest reduced-state dimension that will be materialized densely.
pub const MAX_DENSE_REDUCED_DIM: usize = 4096;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Ordered factorization of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    factors: Vec<usize>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl SpaceLayout {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("layout needs at least one factor".into()));
        }
        if let Some(d) = factors.iter().find(|&&d| d < 2) {
            return Err(Error::Config(format!("factor dimension {d} < 2")));
        }
        let mut strides = vec![1usize; factors.len()];
        let mut total: usize = 1;
        for k in (0..factors.len()).rev() {
            strides[k] = total;
            total = total
                .checked_mul(factors[k])
                .ok_or_else(|| Error::Resource("total dimension overflows usize".into()))?;
        }
        Ok(Self {
            factors,
            strides,
            total_dim: total,
        })
    }

    /// `Q (2) ⊗ E_1..E_n (2 each) ⊗ O (n_x)`.
    pub fn universe(n_env: usize, n_x: usize) -> Result<Self> {
        let mut factors = Vec::with_capacity(n_env + 2);
        factors.push(2);
        factors.extend(std::iter::repeat_n(2, n_env));
        factors.push(n_x);
        Self::new(factors)
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self, factor: usize) -> usize {
        self.factors[factor]
    }

    pub fn stride(&self, factor: usize) -> usize {
        self.strides[factor]
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Index of `factor` inside the flat index `flat`.
    #[inline]
    pub fn local_index(&self, flat: usize, factor: usize) -> usize {
        (flat / self.strides[factor]) % self.factors[factor]
    }

    pub fn flat_index(&self, locals: &[usize]) -> usize {
        debug_assert_eq!(locals.len(), self.factors.len());
        locals
            .iter()
            .zip(&self.strides)
            .map(|(l, s)| l * s)
            .sum()
    }

    fn check_factor(&self, factor: usize) -> Result<()> {
        if factor >= self.factors.len() {
            return Err(Error::Config(format!(
                "factor index {factor} out of range for {} factors",
                self.factors.len()
            )));
        }
        Ok(())
    }
}

/// Complex amplitudes over a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: Arc<SpaceLayout>,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zeros(layout: Arc<SpaceLayout>) -> Self {
        let n = layout.total_dim();
        Self {
            layout,
            amplitudes: vec![ZERO; n],
        }
    }

    pub fn basis(layout: Arc<SpaceLayout>, flat: usize) -> Result<Self> {
        if flat >= layout.total_dim() {
            return Err(Error::Config(format!("basis index {flat} out of range")));
        }
        let mut s = Self::zeros(layout);
        s.amplitudes[flat] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(layout: Arc<SpaceLayout>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::Config(format!(
                "amplitude length {} does not match layout dimension {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub(crate) fn amplitudes_vec_mut(&mut self) -> &mut Vec<C64> {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        par::norm_sqr(&self.amplitudes).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        par::inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Config("cannot normalize a zero or non-finite state".into()));
        }
        par::scale(C64::new(1.0 / n, 0.0), &mut self.amplitudes);
        Ok(n)
    }

    pub fn scaled(mut self, alpha: C64) -> Self {
        par::scale(alpha, &mut self.amplitudes);
        self
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: C64, other: &StateVector) {
        par::axpy(alpha, &other.amplitudes, &mut self.amplitudes);
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Single-factor operator.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteOperator {
    /// Real diagonal, e.g. `σ_z` or the position operator on the grid.
    Diagonal(Vec<f64>),
    /// Real symmetric tridiagonal; `off[i]` couples `i` and `i + 1`.
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    /// Dense row-major `dim × dim` matrix.
    Dense { dim: usize, data: Vec<C64> },
}

impl SiteOperator {
    pub fn sigma_z() -> Self {
        Self::Diagonal(vec![1.0, -1.0])
    }

    pub fn sigma_x() -> Self {
        let o = C64::new(1.0, 0.0);
        Self::Dense {
            dim: 2,
            data: vec![ZERO, o, o, ZERO],
        }
    }

    pub fn sigma_y() -> Self {
        Self::Dense {
            dim: 2,
            data: vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::Diagonal(vec![1.0; dim])
    }

    pub fn dense(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Config(format!(
                "dense site operator expects {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self::Dense { dim, data })
    }

    pub fn tridiagonal(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if off.len() + 1 != diag.len() {
            return Err(Error::Config(
                "tridiagonal off-diagonal must have one entry fewer than the diagonal".into(),
            ));
        }
        Ok(Self::Tridiagonal { diag, off })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Tridiagonal { diag, .. } => diag.len(),
            Self::Dense { dim, .. } => *dim,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal(_))
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        match self {
            Self::Diagonal(d) => {
                if row == col {
                    C64::new(d[row], 0.0)
                } else {
                    ZERO
                }
            }
            Self::Tridiagonal { diag, off } => {
                if row == col {
                    C64::new(diag[row], 0.0)
                } else if row + 1 == col {
                    C64::new(off[row], 0.0)
                } else if col + 1 == row {
                    C64::new(off[col], 0.0)
                } else {
                    ZERO
                }
            }
            Self::Dense { dim, data } => data[row * dim + col],
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.element(r, c))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        match self {
            Self::Diagonal(_) | Self::Tridiagonal { .. } => true,
            Self::Dense { dim, data } => (0..*dim).all(|r| {
                (0..*dim).all(|c| (data[r * dim + c] - data[c * dim + r].conj()).norm() <= tol)
            }),
        }
    }
}

/// `coefficient · (A_k1 ⊗ A_k2 ⊗ …)` with identities on unlisted factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub coefficient: f64,
    sites: Vec<(usize, SiteOperator)>,
}

impl ProductTerm {
    /// Site factor indices must be strictly increasing.
    pub fn new(coefficient: f64, sites: Vec<(usize, SiteOperator)>) -> Result<Self> {
        if sites.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(
                "product term factor indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { coefficient, sites })
    }

    pub fn sites(&self) -> &[(usize, SiteOperator)] {
        &self.sites
    }

    pub fn is_diagonal(&self) -> bool {
        self.sites.iter().all(|(_, op)| op.is_diagonal())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sites.iter().all(|(_, op)| op.is_hermitian(tol))
    }

    pub fn validate_for(&self, layout: &SpaceLayout) -> Result<()> {
        for (k, op) in &self.sites {
            layout.check_factor(*k)?;
            if op.dim() != layout.dim(*k) {
                return Err(Error::Config(format!(
                    "site operator of dimension {} applied to factor {k} of dimension {}",
                    op.dim(),
                    layout.dim(*k)
                )));
            }
        }
        Ok(())
    }
}

/// Apply one site operator to `input` along `factor`, writing into `output`.
fn apply_site(layout: &SpaceLayout, factor: usize, op: &SiteOperator, input: &[C64], output: &mut [C64]) {
    let stride = layout.stride(factor);
    let dim = layout.dim(factor);
    output
        .par_chunks_mut(par::CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * par::CHUNK;
            for (k, out) in chunk.iter_mut().enumerate() {
                let i = base + k;
                let a = (i / stride) % dim;
                let row0 = i - a * stride;
                *out = match op {
                    SiteOperator::Diagonal(d) => d[a] * input[i],
                    SiteOperator::Tridiagonal { diag, off } => {
                        let mut acc = diag[a] * input[i];
                        if a > 0 {
                            acc += off[a - 1] * input[i - stride];
                        }
                        if a + 1 < dim {
                            acc += off[a] * input[i + stride];
                        }
                        acc
                    }
                    SiteOperator::Dense { data, .. } => {
                        let row = &data[a * dim..(a + 1) * dim];
                        row.iter()
                            .enumerate()
                            .fold(ZERO, |acc, (b, m)| acc + m * input[row0 + b * stride])
                    }
                };
            }
        });
}

/// `term |input⟩` without materializing any `total_dim × total_dim` matrix.
pub fn apply_product_term(term: &ProductTerm, input: &StateVector) -> Result<StateVector> {
    let layout = input.layout().clone();
    term.validate_for(&layout)?;
    let mut current = input.amplitudes.clone();
    let mut scratch = vec![ZERO; current.len()];
    for (k, op) in term.sites() {
        apply_site(&layout, *k, op, &current, &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
    }
    par::scale(C64::new(term.coefficient, 0.0), &mut current);
    StateVector::from_amplitudes(layout, current)
}

#[derive(Debug, Clone)]
struct DiagFactor {
    stride: usize,
    dim: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
enum BandOp {
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    Dense { data: Vec<C64> },
}

/// A product term with exactly one non-diagonal site.
#[derive(Debug, Clone)]
struct SingleSiteKernel {
    coefficient: f64,
    diagonals: Vec<DiagFactor>,
    stride: usize,
    dim: usize,
    op: BandOp,
}

/// A sum of product terms compiled for repeated application.
///
/// All purely diagonal terms are folded into one diagonal vector; terms
/// with a single non-diagonal site get a dedicated strided kernel; any
/// remaining terms go through [`apply_product_term`].
#[derive(Debug, Clone)]
pub struct OperatorSum {
    layout: Arc<SpaceLayout>,
    diagonal: Option<Vec<f64>>,
    kernels: Vec<SingleSiteKernel>,
    general: Vec<ProductTerm>,
    num_terms: usize,
}

impl OperatorSum {
    pub fn new(layout: Arc<SpaceLayout>, terms: &[ProductTerm]) -> Result<Self> {
        for t in terms {
            t.validate_for(&layout)?;
        }
        let diagonal_terms: Vec<&ProductTerm> = terms.iter().filter(|t| t.is_diagonal()).collect();
        let diagonal = if diagonal_terms.is_empty() {
            None
        } else {
            let mut diag = vec![0.0; layout.total_dim()];
            let l = &layout;
            diag.par_chunks_mut(par::CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * par::CHUNK;
                    for (k, out) in chunk.iter_mut().enumerate() {
                        let i = base + k;
                        let mut acc = 0.0;
                        for t in &diagonal_terms {
                            let mut v = t.coefficient;
                            for (f, op) in t.sites() {
                                if let SiteOperator::Diagonal(d) = op {
                                    v *= d[l.local_index(i, *f)];
                                }
                            }
                            acc += v;
                        }
                        *out = acc;
                    }
                });
            Some(diag)
        };

        let mut kernels = Vec::new();
        let mut general = Vec::new();
        for t in terms.iter().filter(|t| !t.is_diagonal()) {
            let non_diag: Vec<_> = t.sites().iter().filter(|(_, op)| !op.is_diagonal()).collect();
            if non_diag.len() != 1 {
                general.push(t.clone());
                continue;
            }
            let (active, op) = non_diag[0];
            let diagonals = t
                .sites()
                .iter()
                .filter_map(|(f, op)| match op {
                    SiteOperator::Diagonal(d) => Some(DiagFactor {
                        stride: layout.stride(*f),
                        dim: layout.dim(*f),
                        values: d.clone(),
                    }),
                    _ => None,
                })
                .collect();
            let band = match op {
                SiteOperator::Tridiagonal { diag, off } => BandOp::Tridiagonal {
                    diag: diag.clone(),
                    off: off.clone(),
                },
                SiteOperator::Dense { data, .. } => BandOp::Dense { data: data.clone() },
                SiteOperator::Diagonal(_) => unreachable!(),
            };
            kernels.push(SingleSiteKernel {
                coefficient: t.coefficient,
                diagonals,
                stride: layout.stride(*active),
                dim: layout.dim(*active),
                op: band,
            });
        }
        Ok(Self {
            layout,
            diagonal,
            kernels,
            general,
            num_terms: terms.len(),
        })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    /// `output = Σ_k term_k · input`.
    pub fn apply_into(&self, input: &[C64], output: &mut [C64]) {
        let n = self.layout.total_dim();
        assert_eq!(input.len(), n);
        assert_eq!(output.len(), n);
        let diag = self.diagonal.as_deref();
        let kernels = &self.kernels;
        output
            .par_chunks_mut(par::CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * par::CHUNK;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let i = base + k;
                    let mut acc = match diag {
                        Some(d) => d[i] * input[i],
                        None => ZERO,
                    };
                    for kern in kernels {
                        let mut f = kern.coefficient;
                        for d in &kern.diagonals {
                            f *= d.values[(i / d.stride) % d.dim];
                        }
                        if f == 0.0 {
                            continue;
                        }
                        let a = (i / kern.stride) % kern.dim;
                        let s = kern.stride;
                        let band = match &kern.op {
                            BandOp::Tridiagonal { diag, off } => {
                                let mut b = diag[a] * input[i];
                                if a > 0 {
                                    b += off[a - 1] * input[i - s];
                                }
                                if a + 1 < kern.dim {
                                    b += off[a] * input[i + s];
                                }
                                b
                            }
                            BandOp::Dense { data } => {
                                let row0 = i - a * s;
                                let row = &data[a * kern.dim..(a + 1) * kern.dim];
                                row.iter()
                                    .enumerate()
                                    .fold(ZERO, |acc, (b, m)| acc + m * input[row0 + b * s])
                            }
                        };
                        acc += f * band;
                    }
                    *out = acc;
                }
            });
        if !self.general.is_empty() {
            let state = StateVector::from_amplitudes(self.layout.clone(), input.to_vec())
                .expect("layout checked above");
            for t in &self.general {
                let r = apply_product_term(t, &state).expect("terms validated at construction");
                par::axpy(C64::new(1.0, 0.0), r.amplitudes(), output);
            }
        }
    }

    pub fn apply(&self, input: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(self.layout.clone());
        self.apply_into(input.amplitudes(), out.amplitudes_mut());
        out
    }

    /// `<ψ|H|ψ>` (real for Hermitian sums).
    pub fn expectation(&self, state: &StateVector) -> f64 {
        let h = self.apply(state);
        state.inner(&h).re
    }
}

/// `Σ_k term_k |input⟩`; the empty sum gives the zero vector.
pub fn apply_hamiltonian(terms: &[ProductTerm], input: &StateVector) -> Result<StateVector> {
    let op = OperatorSum::new(input.layout().clone(), terms)?;
    Ok(op.apply(input))
}

/// Dense Kronecker assembly of a term sum, for small verification problems.
pub fn kron_assemble(layout: &SpaceLayout, terms: &[ProductTerm]) -> Result<DMatrix<C64>> {
    let n = layout.total_dim();
    if n > MAX_DENSE_REDUCED_DIM {
        return Err(Error::Resource(format!(
            "dense assembly of dimension {n} exceeds limit {MAX_DENSE_REDUCED_DIM}"
        )));
    }
    let mut total = DMatrix::<C64>::zeros(n, n);
    for t in terms {
        t.validate_for(layout)?;
        let mut m = DMatrix::<C64>::from_element(1, 1, C64::new(t.coefficient, 0.0));
        let mut sites = t.sites().iter().peekable();
        for f in 0..layout.num_factors() {
            let factor = match sites.peek() {
                Some((k, op)) if *k == f => {
                    sites.next();
                    op.to_dense()
                }
                _ => DMatrix::<C64>::identity(layout.dim(f), layout.dim(f)),
            };
            m = m.kronecker(&factor);
        }
        total += m;
    }
    Ok(total)
}

/// Hermitian positive unit-trace reduced state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` of a normalized vector.
    pub fn pure(amplitudes: &[C64]) -> Self {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        Self {
            matrix: &v * v.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn max_hermitian_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.matrix.clone().symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Checks Hermiticity, unit trace and positivity to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = self.max_hermitian_error();
        if herm > tol {
            return Err(Error::InvalidState(format!("non-Hermitian by {herm:e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `<u|ρ|v>`.
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for r in 0..n {
            let mut row = ZERO;
            for c in 0..n {
                row += self.matrix[(r, c)] * v[c];
            }
            acc += u[r].conj() * row;
        }
        acc
    }
}

fn kept_dimension(layout: &SpaceLayout, keep: &[usize]) -> Result<usize> {
    if keep.is_empty() {
        return Err(Error::Usage("partial trace needs at least one kept factor".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage(
            "kept factors must be distinct and sorted ascending".into(),
        ));
    }
    let mut dim: usize = 1;
    for &k in keep {
        layout.check_factor(k)?;
        dim = dim.saturating_mul(layout.dim(k));
    }
    Ok(dim)
}

/// `ρ_keep = Tr_rest |ψ⟩⟨ψ|`, computed as `M M†` with `M` the state
/// reshaped to `(kept, rest)`.
pub fn partial_trace(state: &StateVector, keep: &[usize]) -> Result<DensityMatrix> {
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let layout = state.layout();
    let dk = kept_dimension(layout, &keep)?;
    if dk > MAX_DENSE_REDUCED_DIM {
        return Err(Error::Resource(format!(
            "reduced dimension {dk} exceeds limit {MAX_DENSE_REDUCED_DIM}"
        )));
    }
    let n = layout.total_dim();
    let dr = n / dk;
    let rest: Vec<usize> = (0..layout.num_factors()).filter(|f| !keep.contains(f)).collect();

    // Row-major (kept, rest) reshaping of the amplitudes.
    let mut m = vec![ZERO; n];
    let amps = state.amplitudes();
    for (i, a) in amps.iter().enumerate() {
        let mut ki = 0;
        for &f in &keep {
            ki = ki * layout.dim(f) + layout.local_index(i, f);
        }
        let mut ri = 0;
        for &f in &rest {
            ri = ri * layout.dim(f) + layout.local_index(i, f);
        }
        m[ki * dr + ri] = *a;
    }

    let rows: Vec<Vec<C64>> = (0..dk)
        .into_par_iter()
        .map(|a| {
            let ra = &m[a * dr..(a + 1) * dr];
            (a..dk)
                .map(|b| {
                    let rb = &m[b * dr..(b + 1) * dr];
                    ra.iter().zip(rb).fold(ZERO, |acc, (x, y)| acc + x * y.conj())
                })
                .collect()
        })
        .collect();
    let mut rho = DMatrix::<C64>::zeros(dk, dk);
    for (a, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let b = a + off;
            rho[(a, b)] = v;
            rho[(b, a)] = v.conj();
        }
        rho[(a, a)].im = 0.0;
    }
    Ok(DensityMatrix { matrix: rho })
}

/// Per-factor recipe for [`random_product_state`].
#[derive(Debug, Clone, PartialEq)]
pub enum FactorSpec {
    /// Computational basis state `|k⟩`.
    Basis(usize),
    /// Explicit (unnormalized) amplitudes, e.g. a qubit pair or a grid wavefunction.
    Amplitudes(Vec<C64>),
    /// Haar-random pure state of the factor.
    Haar,
}

/// Normalized product state `⊗_k |φ_k⟩`; Haar factors draw from one
/// ChaCha stream seeded by `seed`, in factor order.
pub fn random_product_state(
    layout: Arc<SpaceLayout>,
    seed: u64,
    specs: &[FactorSpec],
) -> Result<StateVector> {
    if specs.len() != layout.num_factors() {
        return Err(Error::Config(format!(
            "{} factor specs for {} factors",
            specs.len(),
            layout.num_factors()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locals: Vec<Vec<C64>> = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let d = layout.dim(k);
        let mut v = match spec {
            FactorSpec::Basis(b) => {
                if *b >= d {
                    return Err(Error::Config(format!("basis index {b} out of range for factor {k}")));
                }
                let mut v = vec![ZERO; d];
                v[*b] = C64::new(1.0, 0.0);
                v
            }
            FactorSpec::Amplitudes(a) => {
                if a.len() != d {
                    return Err(Error::Config(format!(
                        "factor {k} expects {d} amplitudes, got {}",
                        a.len()
                    )));
                }
                a.clone()
            }
            FactorSpec::Haar => (0..d)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im)
                })
                .collect(),
        };
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Config(format!("factor {k} spec is not normalizable")));
        }
        for z in &mut v {
            *z /= norm;
        }
        locals.push(v);
    }
    let mut amps = vec![C64::new(1.0, 0.0)];
    for v in &locals {
        let mut next = Vec::with_capacity(amps.len() * v.len());
        for a in &amps {
            for b in v {
                next.push(a * b);
            }
        }
        amps = next;
    }
    StateVector::from_amplitudes(layout, amps)
}
