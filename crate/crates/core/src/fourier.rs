//! Fourier sufficient condition for couplings with a linear phase.
//!
//! When `α_km(τ) = α0 + Ω0τ` and `|γ_km|` is periodic with harmonics
//! `Γ_l e^{iΩ_l τ}`, `Ω_l = 2πl/T`, the first-order amplitude is
//!
//! ```text
//! ∫₀^τ M_km = e^{iα0} Σ_l Γ_l (e^{i(Ω0+Ω_l)τ} − 1) / (i(Ω0+Ω_l))
//! ```
//!
//! and since |e^{ix} − 1| ≤ 2 each term is controlled by `|Γ_l/(Ω0+Ω_l)|`,
//! which is the reported condition value.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::frame::InvariantFrame;
use crate::linalg::CMatrix;
use crate::model::HVParams;

/// Default relative tolerance for the linear-phase test.
pub const DEFAULT_LINEARITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("fourier: PeriodMismatch, period {period} is not a whole number of steps {step} within the grid")]
    PeriodMismatch { period: f64, step: f64 },
    #[error("fourier: PhaseNotLinear for pair {pair:?} (residual {residual:e})")]
    PhaseNotLinear { pair: (usize, usize), residual: f64 },
    #[error("fourier: level pair {0:?} is out of range or diagonal")]
    BadPair((usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLinearity {
    pub pair: (usize, usize),
    pub is_linear: bool,
    pub alpha0: f64,
    pub omega0: f64,
    pub max_residual: f64,
}

/// Least-squares line through α_km(τ) on the frame grid.
pub fn check_linear_phase(frame: &InvariantFrame, pair: (usize, usize), linearity_tol: f64) -> Result<PhaseLinearity, FourierError> {
    let (k, m) = pair;
    if k == m || k >= frame.dim() || m >= frame.dim() {
        return Err(FourierError::BadPair(pair));
    }
    let grid = frame.grid();
    let alpha = frame.alpha_series(k, m);
    let n = alpha.len() as f64;
    let taus: Vec<f64> = grid.taus().collect();
    let mean_t = taus.iter().sum::<f64>() / n;
    let mean_a = alpha.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, a) in taus.iter().zip(&alpha) {
        sxy += (t - mean_t) * (a - mean_a);
        sxx += (t - mean_t) * (t - mean_t);
    }
    let omega0 = sxy / sxx;
    let alpha0 = mean_a - omega0 * mean_t;
    let max_residual = taus.iter().zip(&alpha).map(|(t, a)| (a - alpha0 - omega0 * t).abs()).fold(0.0, f64::max);
    let is_linear = max_residual < linearity_tol * (1.0 + omega0.abs() * grid.tau_end());
    Ok(PhaseLinearity { pair, is_linear, alpha0, omega0, max_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub l: i64,
    pub omega: f64,
    pub gamma: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingHarmonics {
    pub period: f64,
    pub harmonics: Vec<Harmonic>,
    /// mean of |γ|² over one period
    pub mean_square: f64,
    /// part of `mean_square` not carried by the retained harmonics
    pub tail_energy: f64,
}

impl CouplingHarmonics {
    /// Σ_l Γ_l e^{iΩ_l τ}.
    pub fn reconstruct(&self, tau: f64) -> C64 {
        self.harmonics.iter().map(|h| h.gamma * C64::from_polar(1.0, h.omega * tau)).sum()
    }

    pub fn get(&self, l: i64) -> Option<&Harmonic> {
        self.harmonics.iter().find(|h| h.l == l)
    }
}

/// Discrete Fourier coefficients of uniformly sampled `modulus` (step `dt`)
/// over one `period`, for l = −n_harmonics..=n_harmonics.
pub fn fourier_decompose_coupling(
    modulus: &[f64],
    dt: f64,
    period: f64,
    n_harmonics: usize,
) -> Result<CouplingHarmonics, FourierError> {
    let ratio = period / dt;
    let steps = ratio.round();
    if period.is_nan() || period <= 0.0 || steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps as usize >= modulus.len() {
        return Err(FourierError::PeriodMismatch { period, step: dt });
    }
    let n = steps as usize;
    let window = &modulus[..n];
    let mean_square = window.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let harmonics: Vec<Harmonic> = (-(n_harmonics as i64)..=n_harmonics as i64)
        .map(|l| {
            let gamma: C64 = window
                .iter()
                .enumerate()
                .map(|(j, &x)| C64::from_polar(x, -TAU * (l as f64) * (j as f64) / n as f64))
                .sum::<C64>()
                / n as f64;
            Harmonic { l, omega: TAU * l as f64 / period, gamma }
        })
        .collect();
    let retained: f64 = harmonics.iter().map(|h| h.gamma.norm_sqr()).sum();
    Ok(CouplingHarmonics { period, harmonics, mean_square, tail_energy: (mean_square - retained).max(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicRatio {
    pub l: i64,
    pub omega_l: f64,
    pub gamma: C64,
    /// |Γ_l/(Ω0 + Ω_l)|; infinite at resonance
    pub ratio: f64,
    pub resonant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierConditionReport {
    pub pair: (usize, usize),
    pub omega0: f64,
    pub ratios: Vec<HarmonicRatio>,
    pub max_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
    pub resonances: Vec<i64>,
}

/// Evaluates |Γ_l/(Ω0+Ω_l)| for each retained harmonic. A harmonic with
/// |Ω0+Ω_l| below `resonance_tol` (default 1e-9·max|Ω|) is resonant and
/// fails the report.
pub fn fourier_condition_report(
    linearity: &PhaseLinearity,
    harmonics: &CouplingHarmonics,
    threshold: f64,
    resonance_tol: Option<f64>,
) -> Result<FourierConditionReport, FourierError> {
    if !linearity.is_linear {
        return Err(FourierError::PhaseNotLinear { pair: linearity.pair, residual: linearity.max_residual });
    }
    let omega0 = linearity.omega0;
    let scale = harmonics.harmonics.iter().map(|h| h.omega.abs()).fold(omega0.abs(), f64::max);
    let tol = resonance_tol.unwrap_or(1e-9 * scale);
    let mut resonances = Vec::new();
    let ratios: Vec<HarmonicRatio> = harmonics
        .harmonics
        .iter()
        .map(|h| {
            let denom = omega0 + h.omega;
            let resonant = denom.abs() < tol;
            let ratio = if h.gamma.norm() == 0.0 {
                0.0
            } else if resonant {
                f64::INFINITY
            } else {
                h.gamma.norm() / denom.abs()
            };
            if resonant {
                resonances.push(h.l);
            }
            HarmonicRatio { l: h.l, omega_l: h.omega, gamma: h.gamma, ratio, resonant }
        })
        .collect();
    let max_ratio = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let pass = resonances.is_empty() && max_ratio < threshold;
    Ok(FourierConditionReport { pair: linearity.pair, omega0, ratios, max_ratio, threshold, pass, resonances })
}

/// |Σ_l Γ_l (e^{i(Ω0+Ω_l)τ} − 1)/(i(Ω0+Ω_l))|², the harmonic form of
/// |∫₀^τ e^{iα}|γ||². A resonant term contributes Γ_l τ.
pub fn series_deficit(linearity: &PhaseLinearity, harmonics: &CouplingHarmonics, tau: f64) -> f64 {
    harmonics
        .harmonics
        .iter()
        .map(|h| {
            let w = linearity.omega0 + h.omega;
            if w.abs() * tau < 1e-12 {
                h.gamma * tau
            } else {
                h.gamma * (C64::from_polar(1.0, w * tau) - 1.0) / C64::new(0.0, w)
            }
        })
        .sum::<C64>()
        .norm_sqr()
}

/// max over samples and pairs of |M_nm − closed form| for an H_V model, with
/// `M_nm = e^{−i(E_m−E_n)τ + i(V_mm−V_nn)τ}⟨E_n|V|E_m⟩`. The frame's own
/// eigenvectors at τ = 0 stand in for |E_n⟩, so the comparison holds in any
/// gauge.
pub fn verify_hv_coupling(params: &HVParams, frame: &InvariantFrame) -> f64 {
    let d = frame.dim();
    let grid = frame.grid();
    let basis0: CMatrix = frame.spectrum().eigenvectors(0).clone();
    let v_in_basis = basis0.adjoint() * &params.v * &basis0;
    let energies: Vec<f64> = (0..d).map(|n| params.level_energy(n)).collect();
    let mut worst = 0.0_f64;
    for (k, tau) in grid.taus().enumerate() {
        let numeric = frame.coupling(k);
        for n in 0..d {
            for m in 0..d {
                if n == m {
                    continue;
                }
                let rate = -(energies[m] - energies[n]) + (v_in_basis[(m, m)].re - v_in_basis[(n, n)].re);
                let expected = C64::from_polar(1.0, rate * tau) * v_in_basis[(n, m)];
                worst = worst.max((numeric[(n, m)] - expected).norm());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(omega0: f64) -> PhaseLinearity {
        PhaseLinearity { pair: (0, 1), is_linear: true, alpha0: 0.0, omega0, max_residual: 0.0 }
    }

    #[test]
    fn constant_modulus_is_a_single_harmonic() {
        let samples = vec![0.3; 101];
        let h = fourier_decompose_coupling(&samples, 0.1, 10.0, 4).unwrap();
        assert!((h.get(0).unwrap().gamma - C64::new(0.3, 0.0)).norm() < 1e-15);
        for x in h.harmonics.iter().filter(|x| x.l != 0) {
            assert!(x.gamma.norm() < 1e-12);
        }
        assert!(h.tail_energy < 1e-15);
    }

    #[test]
    fn cosine_modulus_splits_into_three() {
        let (g, period, dt) = (0.2, 8.0, 0.01);
        let samples: Vec<f64> = (0..=1600).map(|j| g * (1.0 + (TAU * j as f64 * dt / period).cos())).collect();
        let h = fourier_decompose_coupling(&samples, dt, period, 3).unwrap();
        assert!((h.get(0).unwrap().gamma.re - g).abs() < 1e-12);
        assert!((h.get(1).unwrap().gamma.re - g / 2.0).abs() < 1e-12);
        assert!((h.get(-1).unwrap().gamma.re - g / 2.0).abs() < 1e-12);
        assert!(h.get(2).unwrap().gamma.norm() < 1e-12);
        assert!(h.tail_energy < 1e-12);
        for j in [0usize, 77, 345] {
            let t = j as f64 * dt;
            assert!((h.reconstruct(t).re - samples[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn period_must_fit_the_grid() {
        let samples = vec![1.0; 101];
        assert!(matches!(fourier_decompose_coupling(&samples, 0.1, 1.05, 2), Err(FourierError::PeriodMismatch { .. })));
        assert!(matches!(fourier_decompose_coupling(&samples, 0.1, 20.0, 2), Err(FourierError::PeriodMismatch { .. })));
    }

    #[test]
    fn zero_coupling_passes() {
        let h = fourier_decompose_coupling(&[0.0; 11], 0.1, 1.0, 2).unwrap();
        let r = fourier_condition_report(&lin(1.0), &h, 1e-2, None).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn resonance_is_flagged_not_divided() {
        // Ω0 = −Ω_1 with a nonzero first harmonic
        let (period, dt) = (2.0, 0.01);
        let samples: Vec<f64> = (0..=200).map(|j| 1.0 + 0.5 * (TAU * j as f64 * dt / period).cos()).collect();
        let h = fourier_decompose_coupling(&samples, dt, period, 2).unwrap();
        let r = fourier_condition_report(&lin(-TAU / period), &h, 1e-2, None).unwrap();
        assert_eq!(r.resonances, vec![1]);
        assert!(!r.pass);
        assert!(r.max_ratio.is_infinite());
    }

    #[test]
    fn nonlinear_phase_is_rejected() {
        let h = fourier_decompose_coupling(&[1.0; 11], 0.1, 1.0, 0).unwrap();
        let mut l = lin(1.0);
        l.is_linear = false;
        assert!(matches!(fourier_condition_report(&l, &h, 1e-2, None), Err(FourierError::PhaseNotLinear { .. })));
    }

    #[test]
    fn series_matches_direct_quadrature() {
        let (period, dt, omega0) = (4.0, 1e-3, 2.3);
        let n = 8000;
        let modulus: Vec<f64> = (0..=n).map(|j| 0.1 + 0.04 * (TAU * j as f64 * dt / period).sin()).collect();
        let h = fourier_decompose_coupling(&modulus, dt, period, 3).unwrap();
        let integrand: Vec<C64> = modulus.iter().enumerate().map(|(j, &g)| C64::from_polar(g, omega0 * j as f64 * dt)).collect();
        let direct = crate::numeric::cumulative_trapezoid_complex(&integrand, dt);
        for j in [1000usize, 4321, 8000] {
            let d = direct[j].norm_sqr();
            let s = series_deficit(&lin(omega0), &h, j as f64 * dt);
            assert!((d - s).abs() < 1e-6, "{d} vs {s}");
        }
    }
}
