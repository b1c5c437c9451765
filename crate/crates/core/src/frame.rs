//! The U(1)-invariant adiabatic basis and its coupling matrix.
//!
//! Basis vectors are `Φ_m(τ) = e^{-iΘ_m(τ)} φ_m(τ)` with
//! `Θ_m(τ) = ∫₀^τ [e_m(λ) − γ_mm(λ)] dλ`. Redressing φ_m by a phase e^{if_m},
//! f_m(0) = 0, shifts γ_mm by −ḟ_m and Θ_m by f_m, so Φ_m does not change.
//!
//! The coupling matrix is `M_ab = e^{iα_ab}|γ_ab|` with
//! `α_ab(τ) = ∫₀^τ (e_a − e_b) dη + ξ_ab(τ)` and
//! `ξ_ab(τ) = ∫₀^τ (γ_bb − γ_aa) dη + arg γ_ab(τ)`, which is the same as
//! `⟨Φ_a|i∂τ|Φ_b⟩` off the diagonal. All integrals are composite trapezoid.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{CMatrix, CVector, I};
use crate::numeric;
use crate::spectrum::{AdiabaticSpectrum, GammaMatrix};

/// |γ_ab| below which arg γ_ab is treated as undefined.
pub const ARG_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame: GridMismatch ({0})")]
    GridMismatch(String),
}

/// A sample where arg γ_ab could not be taken; ξ_ab there is interpolated
/// from the neighbouring samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UndefinedArg {
    pub pair: (usize, usize),
    pub sample: usize,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct GeometricPotential {
    /// ξ_ab(τ_k), antisymmetric in (a, b)
    pub xi: Vec<DMatrix<f64>>,
    /// Δ_ab = dξ_ab/dτ
    pub delta: Vec<DMatrix<f64>>,
    pub undefined: Vec<UndefinedArg>,
}

#[derive(Debug, Clone)]
pub struct InvariantFrame {
    spectrum: AdiabaticSpectrum,
    gamma: GammaMatrix,
    dynamical_phase: Vec<Vec<f64>>,
    potential: GeometricPotential,
    alpha: Vec<DMatrix<f64>>,
    coupling: Vec<CMatrix>,
}

fn check_lengths(spectrum: &AdiabaticSpectrum, gamma: &GammaMatrix) -> Result<(), FrameError> {
    if gamma.len() != spectrum.grid().len() {
        return Err(FrameError::GridMismatch(format!(
            "gamma has {} samples, grid has {}",
            gamma.len(),
            spectrum.grid().len()
        )));
    }
    if gamma.at(0).nrows() != spectrum.dim() {
        return Err(FrameError::GridMismatch("gamma and spectrum differ in dimension".into()));
    }
    Ok(())
}

/// Θ_m(τ_k) for every sample k (outer) and level m (inner).
pub fn dynamical_phases(spectrum: &AdiabaticSpectrum, gamma: &GammaMatrix) -> Result<Vec<Vec<f64>>, FrameError> {
    check_lengths(spectrum, gamma)?;
    let grid = spectrum.grid();
    let d = spectrum.dim();
    let mut per_level: Vec<Vec<f64>> = Vec::with_capacity(d);
    for m in 0..d {
        let energy: Vec<f64> = (0..grid.len()).map(|k| spectrum.eigenvalues(k)[m]).collect();
        let dynamic = numeric::cumulative_trapezoid(&energy, grid.step());
        let berry = gamma.berry_integral(m, grid.step());
        per_level.push(dynamic.iter().zip(&berry).map(|(e, b)| e - b).collect());
    }
    Ok((0..grid.len()).map(|k| per_level.iter().map(|p| p[k]).collect()).collect())
}

/// Continuous arg of a complex series, interpolating across samples where the
/// modulus vanishes. Returns the phases and the indices that were filled in.
fn unwrapped_arg(series: &[C64]) -> (Vec<f64>, Vec<usize>) {
    let defined: Vec<usize> = (0..series.len()).filter(|&k| series[k].norm() >= ARG_FLOOR).collect();
    let undefined: Vec<usize> = (0..series.len()).filter(|&k| series[k].norm() < ARG_FLOOR).collect();
    if defined.is_empty() {
        return (vec![0.0; series.len()], undefined);
    }
    let raw: Vec<f64> = defined.iter().map(|&k| series[k].arg()).collect();
    let unwrapped = numeric::unwrap_phase(&raw);
    let mut out = vec![0.0; series.len()];
    for (&k, &p) in defined.iter().zip(&unwrapped) {
        out[k] = p;
    }
    for &k in &undefined {
        let right = defined.partition_point(|&j| j < k);
        out[k] = match (right.checked_sub(1), defined.get(right)) {
            (Some(l), Some(&r)) => {
                let l = defined[l];
                let s = (k - l) as f64 / (r - l) as f64;
                out[l] * (1.0 - s) + out[r] * s
            }
            (Some(l), None) => out[defined[l]],
            (None, Some(&r)) => out[r],
            (None, None) => unreachable!(),
        };
    }
    (out, undefined)
}

/// ξ and Δ for every level pair. Only the upper triangle is computed from γ;
/// the lower triangle is its negative so that M comes out exactly Hermitian.
pub fn compute_geometric_potential(spectrum: &AdiabaticSpectrum, gamma: &GammaMatrix) -> Result<GeometricPotential, FrameError> {
    check_lengths(spectrum, gamma)?;
    let grid = spectrum.grid();
    let dt = grid.step();
    let d = spectrum.dim();
    let n = grid.len();
    let mut xi = vec![DMatrix::zeros(d, d); n];
    let mut delta = vec![DMatrix::zeros(d, d); n];
    let mut undefined = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            let (upper, lower) = (gamma.berry_integral(b, dt), gamma.berry_integral(a, dt));
            let berry: Vec<f64> = upper.iter().zip(&lower).map(|(x, y)| x - y).collect();
            let series: Vec<C64> = (0..n).map(|k| gamma.at(k)[(a, b)]).collect();
            let (arg, missing) = unwrapped_arg(&series);
            undefined.extend(missing.into_iter().map(|k| UndefinedArg { pair: (a, b), sample: k, tau: grid.tau(k) }));
            let values: Vec<f64> = berry.iter().zip(&arg).map(|(x, y)| x + y).collect();
            let rate = numeric::derivative(&values, dt);
            for k in 0..n {
                xi[k][(a, b)] = values[k];
                xi[k][(b, a)] = -values[k];
                delta[k][(a, b)] = rate[k];
                delta[k][(b, a)] = -rate[k];
            }
        }
    }
    Ok(GeometricPotential { xi, delta, undefined })
}

impl InvariantFrame {
    /// Phases, geometric potential and coupling matrix in one pass.
    pub fn build(spectrum: AdiabaticSpectrum, gamma: GammaMatrix) -> Result<Self, FrameError> {
        let dynamical_phase = dynamical_phases(&spectrum, &gamma)?;
        let potential = compute_geometric_potential(&spectrum, &gamma)?;
        let (alpha, coupling) = build_coupling_matrix(&spectrum, &gamma, &potential);
        Ok(Self { spectrum, gamma, dynamical_phase, potential, alpha, coupling })
    }

    pub fn spectrum(&self) -> &AdiabaticSpectrum {
        &self.spectrum
    }

    pub fn gamma(&self) -> &GammaMatrix {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn grid(&self) -> &crate::grid::TimeGrid {
        self.spectrum.grid()
    }

    /// Θ_m(τ_k).
    pub fn dynamical_phase(&self, k: usize, m: usize) -> f64 {
        self.dynamical_phase[k][m]
    }

    pub fn potential(&self) -> &GeometricPotential {
        &self.potential
    }

    /// α_ab(τ_k).
    pub fn alpha(&self, k: usize) -> &DMatrix<f64> {
        &self.alpha[k]
    }

    /// α_ab along the whole grid.
    pub fn alpha_series(&self, a: usize, b: usize) -> Vec<f64> {
        self.alpha.iter().map(|x| x[(a, b)]).collect()
    }

    /// M(τ_k).
    pub fn coupling(&self, k: usize) -> &CMatrix {
        &self.coupling[k]
    }

    pub fn couplings(&self) -> &[CMatrix] {
        &self.coupling
    }

    /// Φ_m(τ_k).
    pub fn basis_vector(&self, k: usize, m: usize) -> CVector {
        self.spectrum.eigenvector(k, m) * C64::from_polar(1.0, -self.dynamical_phase[k][m])
    }

    /// M from ⟨Φ_a|i∂τ|Φ_b⟩ with the derivative taken by differences of the
    /// basis vectors themselves (diagonal set to zero). Independent of the
    /// phase formula; used to cross-check it.
    pub fn coupling_by_overlap(&self) -> Vec<CMatrix> {
        let grid = self.grid();
        let n = grid.len();
        let d = self.dim();
        let dt = grid.step();
        let basis: Vec<CMatrix> = (0..n)
            .map(|k| {
                let mut b = CMatrix::zeros(d, d);
                for m in 0..d {
                    b.set_column(m, &self.basis_vector(k, m));
                }
                b
            })
            .collect();
        let two_dt = C64::new(2.0 * dt, 0.0);
        (0..n)
            .map(|k| {
                let derivative = if k == 0 {
                    (&basis[0] * C64::new(-3.0, 0.0) + &basis[1] * C64::new(4.0, 0.0) - &basis[2]) / two_dt
                } else if k == n - 1 {
                    (&basis[k] * C64::new(3.0, 0.0) - &basis[k - 1] * C64::new(4.0, 0.0) + &basis[k - 2]) / two_dt
                } else {
                    (&basis[k + 1] - &basis[k - 1]) / two_dt
                };
                let mut m = basis[k].adjoint() * derivative * I;
                m.fill_diagonal(C64::new(0.0, 0.0));
                m
            })
            .collect()
    }
}

/// α and M at every sample from the phase formula.
pub fn build_coupling_matrix(
    spectrum: &AdiabaticSpectrum,
    gamma: &GammaMatrix,
    potential: &GeometricPotential,
) -> (Vec<DMatrix<f64>>, Vec<CMatrix>) {
    let grid = spectrum.grid();
    let n = grid.len();
    let d = spectrum.dim();
    let mut alpha = vec![DMatrix::zeros(d, d); n];
    let mut coupling = vec![CMatrix::zeros(d, d); n];
    for a in 0..d {
        for b in a + 1..d {
            let gap: Vec<f64> = (0..n).map(|k| spectrum.eigenvalues(k)[a] - spectrum.eigenvalues(k)[b]).collect();
            let dynamic = numeric::cumulative_trapezoid(&gap, grid.step());
            for k in 0..n {
                let phase = dynamic[k] + potential.xi[k][(a, b)];
                let z = C64::from_polar(gamma.at(k)[(a, b)].norm(), phase);
                alpha[k][(a, b)] = phase;
                alpha[k][(b, a)] = -phase;
                coupling[k][(a, b)] = z;
                coupling[k][(b, a)] = z.conj();
            }
        }
    }
    (alpha, coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::linalg::{self, sigma_x};
    use crate::model::{build_hv_model, build_spin_half, HVParams, HamiltonianModel, SpinHalfParams, SpinVariant};
    use crate::spectrum::{compute_gamma, solve_quasistationary, Gauge, GammaMethod, DEFAULT_GAP_TOL};
    use std::f64::consts::PI;

    fn frame(model: &HamiltonianModel, grid: &TimeGrid, gauge: Gauge) -> InvariantFrame {
        let s = solve_quasistationary(model, grid, DEFAULT_GAP_TOL, gauge).unwrap();
        let g = compute_gamma(&s, model, GammaMethod::FiniteDifference).unwrap();
        InvariantFrame::build(s, g).unwrap()
    }

    fn hv_example() -> (HVParams, HamiltonianModel) {
        let p = HVParams { energies: vec![0.0, 1.0], eigenbasis: None, v: sigma_x() * C64::new(0.1, 0.0) };
        let m = build_hv_model(&p).unwrap();
        (p, m)
    }

    #[test]
    fn constant_model_has_plain_dynamical_phase_and_no_coupling() {
        let m = HamiltonianModel::constant("c", linalg::real_diagonal(&[-0.3, 0.8])).unwrap();
        let g = TimeGrid::new(4.0, 40).unwrap();
        let f = frame(&m, &g, Gauge::ContinuityFixed);
        for k in 0..g.len() {
            assert!((f.dynamical_phase(k, 0) + 0.3 * g.tau(k)).abs() < 1e-13);
            assert!((f.dynamical_phase(k, 1) - 0.8 * g.tau(k)).abs() < 1e-13);
            assert_eq!(linalg::max_abs(f.coupling(k)), 0.0);
        }
        // γ vanishes everywhere: flagged, not fatal
        assert_eq!(f.potential().undefined.len(), g.len());
    }

    #[test]
    fn hv_dynamical_phase_in_analytic_gauge() {
        let (_, m) = hv_example();
        let g = TimeGrid::new(5.0, 5000).unwrap();
        let f = frame(&m, &g, Gauge::Analytic);
        // γ_mm = V_mm = 0 here, so Θ_m = E_m τ; V_mm enters when diagonal
        for k in (0..g.len()).step_by(500) {
            assert!((f.dynamical_phase(k, 1) - g.tau(k)).abs() < 1e-9);
        }
        let p2 = HVParams {
            energies: vec![0.0, 1.0],
            eigenbasis: None,
            v: sigma_x() * C64::new(0.1, 0.0) + linalg::real_diagonal(&[0.05, -0.02]),
        };
        let m2 = build_hv_model(&p2).unwrap();
        let f2 = frame(&m2, &g, Gauge::Analytic);
        let k = g.len() - 1;
        assert!((f2.dynamical_phase(k, 0) - (0.0 - 0.05) * 5.0).abs() < 1e-8);
        assert!((f2.dynamical_phase(k, 1) - (1.0 + 0.02) * 5.0).abs() < 1e-8);
    }

    #[test]
    fn coupling_is_hermitian_with_zero_diagonal_and_modulus_of_gamma() {
        let p = SpinHalfParams { omega0: 1.0, omega: 0.2, theta: 0.9, variant: SpinVariant::A };
        let m = build_spin_half(p, None).unwrap();
        let g = TimeGrid::new(10.0, 10_000).unwrap();
        let f = frame(&m, &g, Gauge::ContinuityFixed);
        for k in 0..g.len() {
            let mk = f.coupling(k);
            assert_eq!(linalg::hermiticity_defect(mk), 0.0);
            assert_eq!(mk[(0, 0)], C64::new(0.0, 0.0));
            assert!((mk[(0, 1)].norm() - f.gamma().at(k)[(0, 1)].norm()).abs() < 1e-15);
            assert!((mk[(1, 0)].norm() - f.gamma().at(k)[(1, 0)].norm()).abs() < 1e-9);
        }
        assert_eq!(f.dynamical_phase(0, 0), 0.0);
        let xi0 = f.potential().xi[0][(0, 1)];
        let arg0 = f.gamma().at(0)[(0, 1)].arg();
        assert!((xi0 - arg0).abs() < 1e-15);
    }

    #[test]
    fn phase_formula_matches_overlap_route() {
        let (_, m) = hv_example();
        let g = TimeGrid::new(10.0, 10_000).unwrap();
        for gauge in [Gauge::ContinuityFixed, Gauge::Analytic] {
            let f = frame(&m, &g, gauge);
            let direct = f.coupling_by_overlap();
            let worst = (0..g.len()).map(|k| linalg::max_abs(&(f.coupling(k) - &direct[k]))).fold(0.0, f64::max);
            assert!(worst < 1e-6, "{gauge:?}: {worst}");
        }
    }

    #[test]
    fn spin_a_geometric_potential_in_analytic_gauge() {
        let (omega, theta) = (0.1, PI / 4.0);
        let p = SpinHalfParams { omega0: 1.0, omega, theta, variant: SpinVariant::A };
        let m = build_spin_half(p, None).unwrap();
        let g = TimeGrid::new(30.0, 30_000).unwrap();
        let f = frame(&m, &g, Gauge::Analytic);
        for k in (0..g.len()).step_by(1000) {
            assert!((f.potential().delta[k][(0, 1)] + omega * theta.cos()).abs() < 1e-8);
            let rate = -(1.0 + omega * theta.cos());
            assert!((f.alpha(k)[(0, 1)] - f.alpha(0)[(0, 1)] - rate * g.tau(k)).abs() < 1e-7);
        }
    }

    #[test]
    fn isolated_zero_of_gamma_is_interpolated() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let h = HamiltonianModel::constant("c", linalg::real_diagonal(&[0.0, 1.0])).unwrap();
        let s = solve_quasistationary(&h, &g, DEFAULT_GAP_TOL, Gauge::ContinuityFixed).unwrap();
        let samples: Vec<CMatrix> = (0..5)
            .map(|k| {
                let z = if k == 2 { C64::new(0.0, 0.0) } else { C64::from_polar(0.1, 0.2 * k as f64) };
                CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), z, z.conj(), C64::new(0.0, 0.0)])
            })
            .collect();
        let gamma = GammaMatrix::from_samples(GammaMethod::FiniteDifference, samples);
        let pot = compute_geometric_potential(&s, &gamma).unwrap();
        assert_eq!(pot.undefined, vec![UndefinedArg { pair: (0, 1), sample: 2, tau: 0.5 }]);
        assert!((pot.xi[2][(0, 1)] - 0.4).abs() < 1e-14);
        let f = InvariantFrame::build(s, gamma).unwrap();
        assert_eq!(f.coupling(2)[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let h = HamiltonianModel::constant("c", linalg::real_diagonal(&[0.0, 1.0])).unwrap();
        let s = solve_quasistationary(&h, &g, DEFAULT_GAP_TOL, Gauge::ContinuityFixed).unwrap();
        let gamma = GammaMatrix::from_samples(GammaMethod::FiniteDifference, vec![CMatrix::zeros(2, 2); 3]);
        assert!(matches!(InvariantFrame::build(s, gamma), Err(FrameError::GridMismatch(_))));
    }
}
