//! Fixed-step unitary integrators for the Schrödinger equation and the
//! invariant-frame coefficient equation `ċ = iMc`.
//!
//! Both use the exponential midpoint rule, `x_{k+1} = exp(-iΔτ G_mid) x_k`,
//! which is exactly unitary per step for Hermitian generators and second
//! order in Δτ.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::frame::InvariantFrame;
use crate::grid::TimeGrid;
use crate::linalg::{self, CMatrix, CVector};
use crate::model::HamiltonianModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagateError {
    #[error("propagate: GridMismatch ({0})")]
    GridMismatch(String),
    #[error("propagate: initial state must have unit norm (got {0})")]
    InitialStateNotNormalized(f64),
    #[error("propagate: initial level {level} out of range for dimension {dim}")]
    LevelOutOfRange { level: usize, dim: usize },
}

/// |Φ(τ_k)⟩ at every grid sample.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<CVector>,
}

/// c_n(τ_k) at every grid sample.
#[derive(Debug, Clone)]
pub struct CoefficientTrajectory {
    pub grid: TimeGrid,
    pub initial_level: usize,
    pub coeffs: Vec<CVector>,
}

impl CoefficientTrajectory {
    pub fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    /// |c_n(τ_k)|².
    pub fn population(&self, k: usize, n: usize) -> f64 {
        self.coeffs[k][n].norm_sqr()
    }

    /// min over samples of |c_m|.
    pub fn min_initial_amplitude(&self) -> (usize, f64) {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| (k, c[self.initial_level].norm()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }
}

/// Exact and direct survival probabilities with the trajectories behind them.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub p_exact: Vec<f64>,
    pub p_direct: Vec<f64>,
    pub norm_residual: Vec<f64>,
    pub coefficients: CoefficientTrajectory,
    pub states: StateTrajectory,
}

fn check_unit(v: &CVector) -> Result<(), PropagateError> {
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(PropagateError::InitialStateNotNormalized(norm));
    }
    Ok(())
}

/// Integrates `i∂τ|Φ⟩ = h(τ)|Φ⟩` from `initial`.
pub fn evolve_schrodinger(
    model: &HamiltonianModel,
    initial: &CVector,
    grid: &TimeGrid,
) -> Result<StateTrajectory, PropagateError> {
    if initial.len() != model.dim() {
        return Err(PropagateError::GridMismatch(format!(
            "state has {} components, model dimension is {}",
            initial.len(),
            model.dim()
        )));
    }
    check_unit(initial)?;
    let dt = grid.step();
    let mut states = Vec::with_capacity(grid.len());
    let mut psi = initial.clone();
    states.push(psi.clone());
    for k in 0..grid.n_steps() {
        let mid = grid.tau(k) + 0.5 * dt;
        psi = linalg::expm_hermitian(&model.evaluate(mid), C64::new(0.0, -dt)) * psi;
        states.push(psi.clone());
    }
    Ok(StateTrajectory { grid: *grid, states })
}

fn check_samples(coupling: &[CMatrix], grid: &TimeGrid) -> Result<(), PropagateError> {
    if coupling.len() != grid.len() {
        return Err(PropagateError::GridMismatch(format!(
            "{} coupling samples for a grid of {} samples",
            coupling.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// One step propagator `exp(iΔτ M_mid)` with M at the midpoint by linear
/// interpolation of the samples.
fn coefficient_step(coupling: &[CMatrix], k: usize, dt: f64) -> CMatrix {
    let mid = (&coupling[k] + &coupling[k + 1]) * C64::new(0.5, 0.0);
    linalg::expm_hermitian(&mid, C64::new(0.0, dt))
}

/// Integrates `ċ = iM(τ)c` from `c_n(0) = δ_nm`.
pub fn evolve_coefficients(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    initial_level: usize,
) -> Result<CoefficientTrajectory, PropagateError> {
    check_samples(coupling, grid)?;
    let d = coupling[0].nrows();
    if initial_level >= d {
        return Err(PropagateError::LevelOutOfRange { level: initial_level, dim: d });
    }
    let mut c = CVector::zeros(d);
    c[initial_level] = C64::new(1.0, 0.0);
    let mut coeffs = Vec::with_capacity(grid.len());
    coeffs.push(c.clone());
    for k in 0..grid.n_steps() {
        c = coefficient_step(coupling, k, grid.step()) * c;
        coeffs.push(c.clone());
    }
    Ok(CoefficientTrajectory { grid: *grid, initial_level, coeffs })
}

/// `T exp[i∫₀^τ M]` at the requested sample indices (ascending or not).
pub fn time_ordered_exponential(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    at: &[usize],
) -> Result<Vec<CMatrix>, PropagateError> {
    check_samples(coupling, grid)?;
    if let Some(&bad) = at.iter().find(|&&k| k >= grid.len()) {
        return Err(PropagateError::GridMismatch(format!("sample {bad} beyond grid")));
    }
    let d = coupling[0].nrows();
    let last = at.iter().copied().max().unwrap_or(0);
    let mut products = Vec::with_capacity(last + 1);
    let mut u = CMatrix::identity(d, d);
    products.push(u.clone());
    for k in 0..last {
        u = coefficient_step(coupling, k, grid.step()) * u;
        products.push(u.clone());
    }
    Ok(at.iter().map(|&k| products[k].clone()).collect())
}

/// P_m(τ_k) = |c_m(τ_k)|².
pub fn survival_probability_exact(coeffs: &CoefficientTrajectory) -> Vec<f64> {
    coeffs.coeffs.iter().map(|c| c[coeffs.initial_level].norm_sqr()).collect()
}

/// P(τ_k) = |⟨Φ_m(τ_k)|Φ(τ_k)⟩|² against the invariant basis.
pub fn survival_probability_direct(
    states: &StateTrajectory,
    frame: &InvariantFrame,
    initial_level: usize,
) -> Result<Vec<f64>, PropagateError> {
    if states.grid != *frame.grid() {
        return Err(PropagateError::GridMismatch("state trajectory and frame use different grids".into()));
    }
    if initial_level >= frame.dim() {
        return Err(PropagateError::LevelOutOfRange { level: initial_level, dim: frame.dim() });
    }
    Ok(states
        .states
        .iter()
        .enumerate()
        .map(|(k, psi)| frame.basis_vector(k, initial_level).dotc(psi).norm_sqr())
        .collect())
}

/// |Σ_n |c_n(τ_k)|² − 1| per sample.
pub fn norm_residuals(coeffs: &CoefficientTrajectory) -> Vec<f64> {
    coeffs.coeffs.iter().map(|c| (c.norm_squared() - 1.0).abs()).collect()
}

/// max_k |Σ_n |c_n(τ_k)|² − 1|.
pub fn conservation_residual(coeffs: &CoefficientTrajectory) -> f64 {
    norm_residuals(coeffs).into_iter().fold(0.0, f64::max)
}
