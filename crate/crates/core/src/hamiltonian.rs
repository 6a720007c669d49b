//! Physical parameters and construction of every Hamiltonian term.
//!
//! `H = H_Q + H_E + H_QE + H_O + H_QO + H_EO` with
//!
//! * `H_Q  = ω_0/2 σ_z`
//! * `H_E  = Σ_j ω_j/2 σ_z^(j)`
//! * `H_QE = Σ_j g_j σ_z ⊗ σ_a^(j)` where `a ∈ {x, z}` is selected by [`QeAxis`]
//! * `H_O  = p²/2m + V(x)`, `V(x) = −a x² + b x⁴` on a finite-difference grid
//! * `H_QO = λ σ_z ⊗ x`
//! * `H_EO = Σ_j κ_j σ_z^(j) ⊗ x`

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorspace::{OperatorSum, ProductTerm, SiteOperator, SpaceLayout, StateVector};

pub const QUBIT_FACTOR: usize = 0;

pub fn env_factor(j: usize) -> usize {
    1 + j
}

pub fn observer_factor(n_env: usize) -> usize {
    n_env + 1
}

/// Environment-side Pauli in the qubit–bath coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QeAxis {
    /// `σ_z ⊗ σ_z^(j)`: pure dephasing, bath populations conserved.
    Zz,
    /// `σ_z ⊗ σ_x^(j)`: bath spins precess about a qubit-dependent axis.
    Zx,
}

impl fmt::Display for QeAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QeAxis::Zz => "zz",
            QeAxis::Zx => "zx",
        })
    }
}

impl std::str::FromStr for QeAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zz" => Ok(QeAxis::Zz),
            "zx" => Ok(QeAxis::Zx),
            other => Err(Error::Config(format!("qe_axis must be zz or zx, got {other:?}"))),
        }
    }
}

/// Uniform sampling ranges for the per-spin bath parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub omega_env: (f64, f64),
    pub g_env: (f64, f64),
    pub kappa_eo: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            omega_env: (0.5, 0.6),
            g_env: (0.14, 0.15),
            kappa_eo: (0.01, 0.05),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("omega_env", self.omega_env),
            ("g_env", self.g_env),
            ("kappa_eo", self.kappa_eo),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Draws `(ω_j, g_j, κ_j)` for `n_env` spins from a ChaCha stream.
    pub fn draw(&self, n_env: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..n_env)
                .map(|_| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        };
        let omega = sample(self.omega_env);
        let g = sample(self.g_env);
        let kappa = sample(self.kappa_eo);
        (omega, g, kappa)
    }
}

/// Physical constants of the model (units with ħ = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub omega0: f64,
    pub omega_env: Vec<f64>,
    pub g_env: Vec<f64>,
    pub lambda_qo: f64,
    pub kappa_eo: Vec<f64>,
    pub mass: f64,
    pub a_well: f64,
    pub b_well: f64,
    pub grid_points: usize,
    pub grid_half_width: f64,
    pub qe_axis: QeAxis,
}

pub const DEFAULT_PARAM_SEED: u64 = 7;

impl PhysicalParams {
    /// Shipped defaults with bath parameters drawn from `ranges`.
    pub fn with_ranges(n_env: usize, ranges: &ParamRanges, param_seed: u64) -> Self {
        let (omega_env, g_env, kappa_eo) = ranges.draw(n_env, param_seed);
        Self {
            omega0: 1.0,
            omega_env,
            g_env,
            lambda_qo: 0.1,
            kappa_eo,
            mass: 1.0,
            a_well: 1.0,
            b_well: 0.32,
            grid_points: 128,
            grid_half_width: 6.0,
            qe_axis: QeAxis::Zx,
        }
    }

    pub fn defaults(n_env: usize) -> Self {
        Self::with_ranges(n_env, &ParamRanges::default(), DEFAULT_PARAM_SEED)
    }

    pub fn n_env(&self) -> usize {
        self.omega_env.len()
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.grid_points, self.grid_half_width)
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::universe(self.n_env(), self.grid_points)
    }

    /// Full invariants for production runs (includes `N_x >= 32`).
    pub fn validate(&self) -> Result<()> {
        self.validate_model()?;
        if self.grid_points < 32 {
            return Err(Error::Config(format!(
                "grid_points must be >= 32, got {}",
                self.grid_points
            )));
        }
        Ok(())
    }

    /// Invariants needed to build the operators; small verification grids
    /// pass this check.
    pub fn validate_model(&self) -> Result<()> {
        if !(self.a_well > 0.0 && self.b_well > 0.0) {
            return Err(Error::Config(format!(
                "double well requires a, b > 0 (got a = {}, b = {})",
                self.a_well, self.b_well
            )));
        }
        if !(self.mass > 0.0) {
            return Err(Error::Config(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.grid_half_width > 0.0) {
            return Err(Error::Config(format!(
                "grid_half_width must be > 0, got {}",
                self.grid_half_width
            )));
        }
        if self.grid_points < 4 {
            return Err(Error::Config(format!(
                "grid_points must be >= 4, got {}",
                self.grid_points
            )));
        }
        let n = self.omega_env.len();
        if self.g_env.len() != n || self.kappa_eo.len() != n {
            return Err(Error::Config(format!(
                "omega_env, g_env and kappa_eo must all have N_E entries ({} / {} / {})",
                n,
                self.g_env.len(),
                self.kappa_eo.len()
            )));
        }
        let scalars = [self.omega0, self.lambda_qo, self.mass, self.a_well, self.b_well];
        let lists = self.omega_env.iter().chain(&self.g_env).chain(&self.kappa_eo);
        if scalars.iter().chain(lists).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite physical parameter".into()));
        }
        Ok(())
    }

    /// Untilted well minima `±sqrt(a / 2b)`.
    pub fn well_minimum(&self) -> f64 {
        (self.a_well / (2.0 * self.b_well)).sqrt()
    }

    pub fn barrier_height(&self) -> f64 {
        self.a_well * self.a_well / (4.0 * self.b_well)
    }

    pub fn potential(&self, x: f64) -> f64 {
        -self.a_well * x * x + self.b_well * x.powi(4)
    }
}

/// Uniform midpoint grid on `[−L, L]`: `x_i = −L + (i + ½) Δx`, `Δx = 2L / N_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(points: usize, half_width: f64) -> Self {
        Self {
            points,
            half_width,
            spacing: 2.0 * half_width / points as f64,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }
}

/// Which Hamiltonian terms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMask {
    pub q: bool,
    pub e: bool,
    pub qe: bool,
    pub o: bool,
    pub qo: bool,
    pub eo: bool,
}

impl TermMask {
    pub const ALL: TermMask = TermMask {
        q: true,
        e: true,
        qe: true,
        o: true,
        qo: true,
        eo: true,
    };

    /// Only the uncoupled subsystem Hamiltonians.
    pub const FREE: TermMask = TermMask {
        q: true,
        e: true,
        qe: false,
        o: true,
        qo: false,
        eo: false,
    };
}

impl Default for TermMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Label attached to each product term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Qubit,
    Environment,
    QubitEnvironment,
    ObserverKinetic,
    ObserverPotential,
    QubitObserver,
    EnvironmentObserver,
}

/// Central-difference `p²/2m` (Dirichlet walls) and the diagonal potential.
pub fn build_double_well(params: &PhysicalParams) -> Result<(SiteOperator, SiteOperator)> {
    params.validate_model()?;
    let grid = params.grid();
    let nodes_between = 2.0 * params.well_minimum() / grid.spacing;
    if nodes_between < 8.0 {
        return Err(Error::Config(format!(
            "grid too coarse: {nodes_between:.1} nodes between the well minima (need >= 8)"
        )));
    }
    let n = grid.points;
    let dx2 = grid.spacing * grid.spacing;
    let diag = vec![1.0 / (params.mass * dx2); n];
    let off = vec![-1.0 / (2.0 * params.mass * dx2); n - 1];
    let kinetic = SiteOperator::tridiagonal(diag, off)?;
    let potential = SiteOperator::Diagonal(grid.nodes().into_iter().map(|x| params.potential(x)).collect());
    Ok((kinetic, potential))
}

/// Observer Hamiltonian `p²/2m + V(x)` as a single tridiagonal operator.
pub fn observer_hamiltonian(params: &PhysicalParams) -> Result<SiteOperator> {
    let (kinetic, potential) = build_double_well(params)?;
    match (kinetic, potential) {
        (SiteOperator::Tridiagonal { mut diag, off }, SiteOperator::Diagonal(v)) => {
            for (d, v) in diag.iter_mut().zip(v) {
                *d += v;
            }
            SiteOperator::tridiagonal(diag, off)
        }
        _ => unreachable!("build_double_well returns tridiagonal + diagonal"),
    }
}

/// The labelled terms of `H` together with their compiled matrix-free sum.
#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    terms: Vec<(Component, ProductTerm)>,
    operator: OperatorSum,
    mask: TermMask,
}

impl HamiltonianSet {
    pub fn from_terms(layout: Arc<SpaceLayout>, terms: Vec<(Component, ProductTerm)>, mask: TermMask) -> Result<Self> {
        let plain: Vec<ProductTerm> = terms.iter().map(|(_, t)| t.clone()).collect();
        let operator = OperatorSum::new(layout, &plain)?;
        Ok(Self { terms, operator, mask })
    }

    pub fn terms(&self) -> &[(Component, ProductTerm)] {
        &self.terms
    }

    pub fn product_terms(&self) -> Vec<ProductTerm> {
        self.terms.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn mask(&self) -> TermMask {
        self.mask
    }

    pub fn operator(&self) -> &OperatorSum {
        &self.operator
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        self.operator.layout()
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        self.operator.apply(state)
    }

    pub fn energy(&self, state: &StateVector) -> f64 {
        self.operator.expectation(state)
    }

    /// Sub-sum restricted to the given components.
    pub fn restricted(&self, keep: &[Component]) -> Result<OperatorSum> {
        let terms: Vec<ProductTerm> = self
            .terms
            .iter()
            .filter(|(c, _)| keep.contains(c))
            .map(|(_, t)| t.clone())
            .collect();
        OperatorSum::new(self.layout().clone(), &terms)
    }
}

/// Builds every enabled term of `H` for `layout`.
pub fn build_total_hamiltonian(
    params: &PhysicalParams,
    layout: Arc<SpaceLayout>,
    mask: TermMask,
) -> Result<HamiltonianSet> {
    params.validate_model()?;
    let n_env = params.n_env();
    if layout.num_factors() != n_env + 2
        || layout.dim(QUBIT_FACTOR) != 2
        || layout.dim(observer_factor(n_env)) != params.grid_points
    {
        return Err(Error::Config(format!(
            "layout {:?} does not match N_E = {n_env}, N_x = {}",
            layout.factors(),
            params.grid_points
        )));
    }
    let obs = observer_factor(n_env);
    let x_op = SiteOperator::Diagonal(params.grid().nodes());
    let (kinetic, potential) = build_double_well(params)?;
    let mut terms = Vec::new();

    if mask.q {
        terms.push((
            Component::Qubit,
            ProductTerm::new(params.omega0 / 2.0, vec![(QUBIT_FACTOR, SiteOperator::sigma_z())])?,
        ));
    }
    if mask.e {
        for (j, w) in params.omega_env.iter().enumerate() {
            terms.push((
                Component::Environment,
                ProductTerm::new(w / 2.0, vec![(env_factor(j), SiteOperator::sigma_z())])?,
            ));
        }
    }
    if mask.qe {
        for (j, g) in params.g_env.iter().enumerate() {
            let bath = match params.qe_axis {
                QeAxis::Zz => SiteOperator::sigma_z(),
                QeAxis::Zx => SiteOperator::sigma_x(),
            };
            terms.push((
                Component::QubitEnvironment,
                ProductTerm::new(*g, vec![(QUBIT_FACTOR, SiteOperator::sigma_z()), (env_factor(j), bath)])?,
            ));
        }
    }
    if mask.o {
        terms.push((Component::ObserverKinetic, ProductTerm::new(1.0, vec![(obs, kinetic)])?));
        terms.push((Component::ObserverPotential, ProductTerm::new(1.0, vec![(obs, potential)])?));
    }
    if mask.qo {
        terms.push((
            Component::QubitObserver,
            ProductTerm::new(
                params.lambda_qo,
                vec![(QUBIT_FACTOR, SiteOperator::sigma_z()), (obs, x_op.clone())],
            )?,
        ));
    }
    if mask.eo {
        for (j, k) in params.kappa_eo.iter().enumerate() {
            terms.push((
                Component::EnvironmentObserver,
                ProductTerm::new(*k, vec![(env_factor(j), SiteOperator::sigma_z()), (obs, x_op.clone())])?,
            ));
        }
    }
    HamiltonianSet::from_terms(layout, terms, mask)
}

/// Conditional observer potentials `V(x) ± λx` for `σ_z = ±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPotentials {
    pub nodes: Vec<f64>,
    /// `V(x) + λx`, qubit in `|0⟩` (`σ_z = +1`).
    pub v_plus: Vec<f64>,
    /// `V(x) − λx`, qubit in `|1⟩` (`σ_z = −1`).
    pub v_minus: Vec<f64>,
    /// Local minima of `V + λx`, ascending.
    pub minima_plus: Vec<f64>,
    /// Local minima of `V − λx`, ascending.
    pub minima_minus: Vec<f64>,
    pub global_min_plus: f64,
    pub global_min_minus: f64,
}

/// Real roots of `x³ + p x + q = 0`, ascending.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = 4.0 * p.powi(3) + 27.0 * q * q;
    if p < 0.0 && disc < 0.0 {
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0).acos() / 3.0;
        let mut roots: Vec<f64> = (0..3)
            .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect();
        roots.sort_by(|a, b| a.total_cmp(b));
        roots
    } else {
        let s = (q * q / 4.0 + p.powi(3) / 27.0).max(0.0).sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    }
}

/// Local minima of `−a x² + b x⁴ + F x`, ascending.
pub fn tilted_minima(a: f64, b: f64, force: f64) -> Vec<f64> {
    // V' = 4b x³ − 2a x + F
    depressed_cubic_roots(-a / (2.0 * b), force / (4.0 * b))
        .into_iter()
        .filter(|x| -2.0 * a + 12.0 * b * x * x > 0.0)
        .collect()
}

pub fn effective_potentials(params: &PhysicalParams) -> TiltedPotentials {
    let nodes = params.grid().nodes();
    let lam = params.lambda_qo;
    let v_plus = nodes.iter().map(|&x| params.potential(x) + lam * x).collect();
    let v_minus = nodes.iter().map(|&x| params.potential(x) - lam * x).collect();
    let minima_plus = tilted_minima(params.a_well, params.b_well, lam);
    let minima_minus = tilted_minima(params.a_well, params.b_well, -lam);
    let global = |minima: &[f64], sign: f64| {
        minima
            .iter()
            .copied()
            .min_by(|x, y| {
                let vx = params.potential(*x) + sign * lam * x;
                let vy = params.potential(*y) + sign * lam * y;
                vx.total_cmp(&vy)
            })
            .unwrap_or(0.0)
    };
    let global_min_plus = global(&minima_plus, 1.0);
    let global_min_minus = global(&minima_minus, -1.0);
    TiltedPotentials {
        nodes,
        v_plus,
        v_minus,
        minima_plus,
        minima_minus,
        global_min_plus,
        global_min_minus,
    }
}
