//! Instantaneous eigenproblem on a time grid and the nonadiabatic coupling.
//!
//! Level labels follow the eigenvectors, not the energy order: each sample is
//! matched to the previous one by maximum overlap, bisecting the step when
//! consecutive frames are too far apart. In the continuity gauge every
//! eigenvector is rotated so its overlap with the previous sample is real and
//! positive (discrete parallel transport).

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::grid::TimeGrid;
use crate::linalg::{self, CMatrix, CVector, I};
use crate::model::HamiltonianModel;
use crate::numeric;

pub use crate::grid::GridError;

/// Default minimum level spacing.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// Consecutive-sample overlap below which a step is bisected for tracking.
pub const CONTINUITY_OVERLAP: f64 = 0.99;
const MAX_BISECTIONS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum: DegenerateGap at tau={tau} (sample {sample}): levels {levels:?} are {gap:e} apart")]
    DegenerateGap { tau: f64, sample: usize, levels: (usize, usize), gap: f64 },
    #[error("spectrum: AssignmentAmbiguous between tau={from} and tau={to} (best overlap {overlap})")]
    AssignmentAmbiguous { from: f64, to: f64, overlap: f64 },
    #[error("spectrum: model dimension must be >= 2 (got {0})")]
    DimensionTooSmall(usize),
    #[error("spectrum: analytic gauge requested but model '{0}' has no closed-form eigenbasis")]
    AnalyticGaugeUnavailable(String),
    #[error("spectrum: DerivativeUnavailable for model '{0}'")]
    DerivativeUnavailable(String),
    #[error("spectrum: GridMismatch ({0})")]
    GridMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    ContinuityFixed,
    Analytic,
}

#[derive(Debug, Clone)]
pub struct AdiabaticSpectrum {
    grid: TimeGrid,
    eigenvalues: Vec<Vec<f64>>,
    eigenvectors: Vec<CMatrix>,
    gauge: Gauge,
    min_gap: f64,
}

impl AdiabaticSpectrum {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues[0].len()
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// e_n(τ_k) for all n.
    pub fn eigenvalues(&self, k: usize) -> &[f64] {
        &self.eigenvalues[k]
    }

    /// Columns are φ_n(τ_k).
    pub fn eigenvectors(&self, k: usize) -> &CMatrix {
        &self.eigenvectors[k]
    }

    pub fn eigenvector(&self, k: usize, n: usize) -> CVector {
        self.eigenvectors[k].column(n).into_owned()
    }

    /// Applies φ_n(τ) → e^{i f(n, τ)} φ_n(τ) at every sample.
    pub fn redressed(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (k, vectors) in out.eigenvectors.iter_mut().enumerate() {
            let tau = self.grid.tau(k);
            for n in 0..vectors.ncols() {
                let phase = C64::from_polar(1.0, f(n, tau));
                for z in vectors.column_mut(n).iter_mut() {
                    *z *= phase;
                }
            }
        }
        out
    }

    /// max over samples and levels of ‖hφ_n - e_nφ_n‖.
    pub fn max_residual(&self, model: &HamiltonianModel) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..self.grid.len() {
            let h = model.evaluate(self.grid.tau(k));
            for (n, &e) in self.eigenvalues[k].iter().enumerate() {
                let v = self.eigenvectors[k].column(n);
                worst = worst.max((&h * v - v * C64::new(e, 0.0)).norm());
            }
        }
        worst
    }

    /// min over k, n of |⟨φ_n(τ_k)|φ_n(τ_{k+1})⟩|.
    pub fn min_continuity_overlap(&self) -> f64 {
        let mut worst = 1.0_f64;
        for w in self.eigenvectors.windows(2) {
            for n in 0..w[0].ncols() {
                worst = worst.min(w[0].column(n).dotc(&w[1].column(n)).norm());
            }
        }
        worst
    }
}

fn check_gap(values: &[f64], tau: f64, sample: usize, gap_tol: f64) -> Result<f64, SpectrumError> {
    let mut min_gap = f64::INFINITY;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            let gap = (values[a] - values[b]).abs();
            if gap < gap_tol {
                return Err(SpectrumError::DegenerateGap { tau, sample, levels: (a, b), gap });
            }
            min_gap = min_gap.min(gap);
        }
    }
    Ok(min_gap)
}

/// Matches the eigenpairs at `to` against `prev` (eigenvectors at `from`),
/// returning them in `prev`'s label order with parallel-transported phases.
fn track(
    model: &HamiltonianModel,
    prev: &CMatrix,
    from: f64,
    to: f64,
    depth: usize,
) -> Result<(Vec<f64>, CMatrix), SpectrumError> {
    let (values, vectors) = linalg::eigh(&model.evaluate(to));
    let d = values.len();
    let overlaps = prev.adjoint() * &vectors;
    let mut assignment = vec![usize::MAX; d];
    let mut claimed = vec![false; d];
    let mut weakest = 1.0_f64;
    let mut clean = true;
    for n in 0..d {
        let (best, best_abs) = (0..d)
            .map(|j| (j, overlaps[(n, j)].norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        weakest = weakest.min(best_abs);
        if claimed[best] || best_abs < std::f64::consts::FRAC_1_SQRT_2 {
            clean = false;
        } else {
            claimed[best] = true;
        }
        assignment[n] = best;
    }

    if !clean || weakest < CONTINUITY_OVERLAP {
        if depth < MAX_BISECTIONS {
            let mid = 0.5 * (from + to);
            let (_, mid_vectors) = track(model, prev, from, mid, depth + 1)?;
            return track(model, &mid_vectors, mid, to, depth + 1);
        }
        if !clean {
            return Err(SpectrumError::AssignmentAmbiguous { from, to, overlap: weakest });
        }
    }

    let mut out_values = vec![0.0; d];
    let mut out_vectors = CMatrix::zeros(d, d);
    for n in 0..d {
        let j = assignment[n];
        let ov = overlaps[(n, j)];
        let phase = ov.conj() / ov.norm();
        out_values[n] = values[j];
        out_vectors.set_column(n, &(vectors.column(j) * phase));
    }
    Ok((out_values, out_vectors))
}

/// Eigendecomposition of `model` at every sample of `grid`, with continuous
/// labels and the requested gauge.
pub fn solve_quasistationary(
    model: &HamiltonianModel,
    grid: &TimeGrid,
    gap_tol: f64,
    gauge: Gauge,
) -> Result<AdiabaticSpectrum, SpectrumError> {
    let d = model.dim();
    if d < 2 {
        return Err(SpectrumError::DimensionTooSmall(d));
    }
    let mut eigenvalues = Vec::with_capacity(grid.len());
    let mut eigenvectors: Vec<CMatrix> = Vec::with_capacity(grid.len());
    let mut min_gap = f64::INFINITY;

    match gauge {
        Gauge::Analytic => {
            if !model.has_eigenbasis() {
                return Err(SpectrumError::AnalyticGaugeUnavailable(model.name().to_string()));
            }
            for k in 0..grid.len() {
                let tau = grid.tau(k);
                let (values, vectors) = model.analytic_eigenbasis(tau).expect("checked above");
                min_gap = min_gap.min(check_gap(&values, tau, k, gap_tol)?);
                eigenvalues.push(values);
                eigenvectors.push(vectors);
            }
        }
        Gauge::ContinuityFixed => {
            let (values, mut vectors) = linalg::eigh(&model.evaluate(0.0));
            for n in 0..d {
                let mut v = vectors.column(n).into_owned();
                linalg::canonical_phase(&mut v);
                vectors.set_column(n, &v);
            }
            min_gap = min_gap.min(check_gap(&values, 0.0, 0, gap_tol)?);
            eigenvalues.push(values);
            eigenvectors.push(vectors);
            for k in 1..grid.len() {
                let (from, to) = (grid.tau(k - 1), grid.tau(k));
                let (values, vectors) = track(model, &eigenvectors[k - 1], from, to, 0)?;
                min_gap = min_gap.min(check_gap(&values, to, k, gap_tol)?);
                eigenvalues.push(values);
                eigenvectors.push(vectors);
            }
        }
    }
    Ok(AdiabaticSpectrum { grid: *grid, eigenvalues, eigenvectors, gauge, min_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMethod {
    /// differences of neighbouring eigenvectors
    FiniteDifference,
    /// off-diagonal `i⟨φ_n|ḣ|φ_m⟩/(e_m − e_n)`; diagonal from differences
    HellmannFeynman,
}

/// γ_nm(τ_k) = i⟨φ_n|∂τ φ_m⟩ per sample.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    method: GammaMethod,
    samples: Vec<CMatrix>,
    /// ∫₀^τ γ_nn per level, when known more accurately than by quadrature
    berry: Option<Vec<Vec<f64>>>,
}

impl GammaMatrix {
    pub fn from_samples(method: GammaMethod, samples: Vec<CMatrix>) -> Self {
        Self { method, samples, berry: None }
    }

    pub fn method(&self) -> GammaMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn at(&self, k: usize) -> &CMatrix {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[CMatrix] {
        &self.samples
    }

    /// ∫₀^τ_k γ_nn for every sample k. Spectrum-derived matrices use the
    /// accumulated overlap phase, which shifts exactly by −(f(τ) − f(0))
    /// under a redressing `φ_n → e^{if}φ_n`; otherwise trapezoid quadrature.
    pub fn berry_integral(&self, n: usize, dt: f64) -> Vec<f64> {
        match &self.berry {
            Some(b) => b[n].clone(),
            None => {
                let diag: Vec<f64> = self.samples.iter().map(|g| g[(n, n)].re).collect();
                numeric::cumulative_trapezoid(&diag, dt)
            }
        }
    }

    /// max over samples of max |γ − γ†|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.samples.iter().map(linalg::hermiticity_defect).fold(0.0, f64::max)
    }
}

/// `other` rephased so its overlap with `anchor` is real and non-negative.
fn aligned(anchor: &CVector, other: CVector) -> CVector {
    let overlap = anchor.dotc(&other);
    if overlap.norm() == 0.0 {
        return other;
    }
    other * (overlap.conj() / overlap.norm())
}

/// Differences of neighbouring eigenvectors, each neighbour first rephased
/// against the centre sample so the off-diagonal entries transform exactly
/// under per-level phase changes. The diagonal comes from the accumulated
/// overlap phase F_n(τ_k) = Σ_{j<k} arg⟨φ_n(τ_j)|φ_n(τ_{j+1})⟩ as γ_nn = −Ḟ_n.
fn finite_difference_gamma(spectrum: &AdiabaticSpectrum) -> (Vec<CMatrix>, Vec<Vec<f64>>) {
    let grid = spectrum.grid();
    let n = grid.len();
    let dt = grid.step();
    let d = spectrum.dim();
    let vector = |k: usize, m: usize| spectrum.eigenvectors[k].column(m).into_owned();
    let mut samples: Vec<CMatrix> = (0..n)
        .map(|k| {
            let mut derivative = CMatrix::zeros(d, d);
            for m in 0..d {
                let centre = vector(k, m);
                let at = |j: usize| aligned(&centre, vector(j, m));
                let column = if k == 0 {
                    (&centre * C64::new(-3.0, 0.0) + at(1) * C64::new(4.0, 0.0) - at(2)) / C64::new(2.0 * dt, 0.0)
                } else if k == n - 1 {
                    (&centre * C64::new(3.0, 0.0) - at(k - 1) * C64::new(4.0, 0.0) + at(k - 2)) / C64::new(2.0 * dt, 0.0)
                } else {
                    (at(k + 1) - at(k - 1)) / C64::new(2.0 * dt, 0.0)
                };
                derivative.set_column(m, &column);
            }
            spectrum.eigenvectors[k].adjoint() * derivative * I
        })
        .collect();
    let mut berry = Vec::with_capacity(d);
    for m in 0..d {
        let mut accumulated: Vec<f64> = Vec::with_capacity(n);
        let mut total = 0.0;
        accumulated.push(0.0);
        for k in 0..n - 1 {
            total += vector(k, m).dotc(&vector(k + 1, m)).arg();
            accumulated.push(total);
        }
        let rate = numeric::derivative(&accumulated, dt);
        for (gamma, r) in samples.iter_mut().zip(&rate) {
            gamma[(m, m)] = C64::new(-r, 0.0);
        }
        berry.push(accumulated.into_iter().map(|x| -x).collect());
    }
    (samples, berry)
}

/// Nonadiabatic coupling on the spectrum's grid. `HellmannFeynman` needs the
/// model derivative.
pub fn compute_gamma(
    spectrum: &AdiabaticSpectrum,
    model: &HamiltonianModel,
    method: GammaMethod,
) -> Result<GammaMatrix, SpectrumError> {
    compute_gamma_with(spectrum, model, method, false)
}

/// As [`compute_gamma`]; with `numeric_derivative` a model without ḣ falls
/// back to a central difference of h (step 1e-4) for `HellmannFeynman`.
pub fn compute_gamma_with(
    spectrum: &AdiabaticSpectrum,
    model: &HamiltonianModel,
    method: GammaMethod,
    numeric_derivative: bool,
) -> Result<GammaMatrix, SpectrumError> {
    if model.dim() != spectrum.dim() {
        return Err(SpectrumError::GridMismatch(format!(
            "model dimension {} vs spectrum dimension {}",
            model.dim(),
            spectrum.dim()
        )));
    }
    let (mut samples, berry) = finite_difference_gamma(spectrum);
    if method == GammaMethod::HellmannFeynman {
        if !model.has_derivative() && !numeric_derivative {
            return Err(SpectrumError::DerivativeUnavailable(model.name().to_string()));
        }
        let grid = spectrum.grid();
        for (k, gamma) in samples.iter_mut().enumerate() {
            let tau = grid.tau(k);
            let hdot = model.derivative(tau).unwrap_or_else(|| {
                let delta = 1e-4;
                (model.evaluate(tau + delta) - model.evaluate(tau - delta)) / C64::new(2.0 * delta, 0.0)
            });
            let vecs = spectrum.eigenvectors(k);
            let values = spectrum.eigenvalues(k);
            let projected = vecs.adjoint() * hdot * vecs;
            for n in 0..values.len() {
                for m in 0..values.len() {
                    if n != m {
                        gamma[(n, m)] = I * projected[(n, m)] / (values[m] - values[n]);
                    }
                }
            }
        }
    }
    Ok(GammaMatrix { method, samples, berry: Some(berry) })
}
