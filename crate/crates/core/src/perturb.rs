//! Perturbative survival probabilities and adiabaticity conditions built from
//! the sampled coupling matrix M(τ).
//!
//! With `F_k(τ) = ∫₀^τ M_km` and `S(τ) = Σ_{k≠m} ∫₀^τ dλ M_mk(λ) F_k(λ)`:
//!
//! | quantity                       | value                           |
//! |--------------------------------|---------------------------------|
//! | first-order probability        | `1 − Σ_k |F_k|²`                |
//! | second-order probability       | `|1 − S|²`                      |
//! | ratio method, first iteration  | `Π_k exp(−2 Re ∫ M_mk F_k)`     |
//! | compact functional (exact c)   | `−Re{i Σ_k ∫ (c_k/c_m) M_mk}`   |
//!
//! The compact functional is reported with the sign that makes it the
//! non-negative deficit `−ln|c_m(τ)| = −½ ln P(τ)`; likewise the ratio
//! condition is `Re S`, its first-order counterpart.
//! Double integrals keep a running inner sum, so everything is linear in the
//! number of steps.

use std::fmt;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::grid::{GridError, TimeGrid};
use crate::linalg::{CMatrix, I};
use crate::numeric;
use crate::propagate::CoefficientTrajectory;

/// Default pass threshold for every condition value.
pub const DEFAULT_THRESHOLD: f64 = 1e-2;
/// |c_m| below which the ratio method is not trusted.
pub const RATIO_BREAKDOWN_FLOOR: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("perturb: RatioBreakdown, |c_m| = {amplitude:e} at tau={tau}")]
    RatioBreakdown { tau: f64, amplitude: f64 },
    #[error("perturb: GridMismatch ({0})")]
    GridMismatch(String),
    #[error("perturb: {0}")]
    Grid(#[from] GridError),
}

fn check(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Result<(), PerturbError> {
    if coupling.len() != grid.len() {
        return Err(PerturbError::GridMismatch(format!("{} samples for {} grid points", coupling.len(), grid.len())));
    }
    if m >= coupling[0].nrows() {
        return Err(PerturbError::GridMismatch(format!("level {m} beyond dimension {}", coupling[0].nrows())));
    }
    Ok(())
}

/// F_k(τ_j) for every k ≠ m, as (k, series).
pub fn first_order_amplitudes(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Vec<(usize, Vec<C64>)> {
    let d = coupling[0].nrows();
    (0..d)
        .filter(|&k| k != m)
        .map(|k| {
            let series: Vec<C64> = coupling.iter().map(|x| x[(k, m)]).collect();
            (k, numeric::cumulative_trapezoid_complex(&series, grid.step()))
        })
        .collect()
}

/// Per-k running `∫₀^τ M_mk F_k` (the summands of S), as (k, series).
fn second_order_terms(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Vec<(usize, Vec<C64>)> {
    first_order_amplitudes(coupling, grid, m)
        .into_iter()
        .map(|(k, f)| {
            let integrand: Vec<C64> = coupling.iter().zip(&f).map(|(x, fk)| x[(m, k)] * fk).collect();
            (k, numeric::cumulative_trapezoid_complex(&integrand, grid.step()))
        })
        .collect()
}

/// S(τ_j) = Σ_{k≠m} ∫₀^τ dλ₁ ∫₀^λ₁ dλ₂ M_mk(λ₁) M_km(λ₂), which is also
/// `(∫∫ M(λ₁)M(λ₂))_mm` because M has a zero diagonal.
pub fn second_order_kernel(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Result<Vec<C64>, PerturbError> {
    check(coupling, grid, m)?;
    let mut total = vec![C64::new(0.0, 0.0); grid.len()];
    for (_, series) in second_order_terms(coupling, grid, m) {
        for (t, s) in total.iter_mut().zip(series) {
            *t += s;
        }
    }
    Ok(total)
}

/// P₁(τ) = 1 − Σ_{k≠m} |∫₀^τ M_km|².
pub fn first_order_probability(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Result<Vec<f64>, PerturbError> {
    check(coupling, grid, m)?;
    let mut p = vec![1.0; grid.len()];
    for (_, f) in first_order_amplitudes(coupling, grid, m) {
        for (pj, fj) in p.iter_mut().zip(f) {
            *pj -= fj.norm_sqr();
        }
    }
    Ok(p)
}

/// |∫₀^τ_end M_km|² per target level k ≠ m.
pub fn first_order_condition(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    m: usize,
    tau_end: f64,
) -> Result<Vec<(usize, f64)>, PerturbError> {
    check(coupling, grid, m)?;
    let j = grid.index_of(tau_end)?;
    Ok(first_order_amplitudes(coupling, grid, m).into_iter().map(|(k, f)| (k, f[j].norm_sqr())).collect())
}

/// P₂(τ) = |1 − S(τ)|².
pub fn second_order_probability(coupling: &[CMatrix], grid: &TimeGrid, m: usize) -> Result<Vec<f64>, PerturbError> {
    Ok(second_order_kernel(coupling, grid, m)?.into_iter().map(|s| (C64::new(1.0, 0.0) - s).norm_sqr()).collect())
}

/// |S(τ_end)|², with the per-k summand moduli squared alongside.
pub fn second_order_condition(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    m: usize,
    tau_end: f64,
) -> Result<(f64, Vec<(usize, f64)>), PerturbError> {
    check(coupling, grid, m)?;
    let j = grid.index_of(tau_end)?;
    let terms = second_order_terms(coupling, grid, m);
    let total: C64 = terms.iter().map(|(_, s)| s[j]).sum();
    Ok((total.norm_sqr(), terms.into_iter().map(|(k, s)| (k, s[j].norm_sqr())).collect()))
}

fn guard(exact: Option<&CoefficientTrajectory>, upto: usize) -> Result<(), PerturbError> {
    if let Some(exact) = exact {
        for k in 0..=upto.min(exact.coeffs.len() - 1) {
            let amplitude = exact.coeffs[k][exact.initial_level].norm();
            if amplitude < RATIO_BREAKDOWN_FLOOR {
                return Err(PerturbError::RatioBreakdown { tau: exact.grid.tau(k), amplitude });
            }
        }
    }
    Ok(())
}

/// Ratio-method probability with `c_k/c_m ≈ i∫₀^λ M_km`:
/// `P(τ) = Π_{k≠m} |exp{i∫₀^τ dλ [i∫₀^λ M_km] M_mk(λ)}|²`.
///
/// When `exact` is given, fails with `RatioBreakdown` if the exact |c_m|
/// drops below [`RATIO_BREAKDOWN_FLOOR`] anywhere on the grid.
pub fn ratio_probability_first_iteration(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    m: usize,
    exact: Option<&CoefficientTrajectory>,
) -> Result<Vec<f64>, PerturbError> {
    check(coupling, grid, m)?;
    guard(exact, grid.n_steps())?;
    let mut p = vec![1.0; grid.len()];
    for (_, series) in second_order_terms(coupling, grid, m) {
        // i · (i ∫ F M) = −∫ F M
        for (pj, s) in p.iter_mut().zip(series) {
            *pj *= (I * (I * s)).exp().norm_sqr();
        }
    }
    Ok(p)
}

/// `−Re{i Σ_{k≠m} ∫₀^τ_end (c_k/c_m) M_mk}` from exact coefficients; equals
/// `−½ ln P(τ_end)` up to quadrature error.
pub fn compact_condition_functional(
    coupling: &[CMatrix],
    exact: &CoefficientTrajectory,
    grid: &TimeGrid,
    tau_end: f64,
) -> Result<f64, PerturbError> {
    let m = exact.initial_level;
    check(coupling, grid, m)?;
    if exact.grid != *grid {
        return Err(PerturbError::GridMismatch("coefficients and coupling use different grids".into()));
    }
    let j = grid.index_of(tau_end)?;
    guard(Some(exact), j)?;
    let d = coupling[0].nrows();
    let integrand: Vec<f64> = (0..=j)
        .map(|i| {
            let c = &exact.coeffs[i];
            let sum: C64 = (0..d).filter(|&k| k != m).map(|k| c[k] / c[m] * coupling[i][(m, k)]).sum();
            -(I * sum).re
        })
        .collect();
    Ok(*numeric::cumulative_trapezoid(&integrand, grid.step()).last().expect("at least one sample"))
}

/// `Re S(τ_end)`: the compact functional with first-order ratios, per k and
/// summed.
pub fn ratio_condition_first_order(
    coupling: &[CMatrix],
    grid: &TimeGrid,
    m: usize,
    tau_end: f64,
) -> Result<(f64, Vec<(usize, f64)>), PerturbError> {
    check(coupling, grid, m)?;
    let j = grid.index_of(tau_end)?;
    let per_level: Vec<(usize, f64)> =
        second_order_terms(coupling, grid, m).into_iter().map(|(k, s)| (k, s[j].re)).collect();
    Ok((per_level.iter().map(|(_, v)| v).sum(), per_level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    FirstOrder,
    SecondOrder,
    RatioFirstIter,
    CompactFunctional,
}

impl Criterion {
    pub const ALL: [Criterion; 4] =
        [Criterion::FirstOrder, Criterion::SecondOrder, Criterion::RatioFirstIter, Criterion::CompactFunctional];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::FirstOrder => "FirstOrder",
            Criterion::SecondOrder => "SecondOrder",
            Criterion::RatioFirstIter => "RatioFirstIter",
            Criterion::CompactFunctional => "CompactFunctional",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionRecord {
    pub criterion: Criterion,
    /// None when the criterion could not be evaluated (see `error`)
    pub value: Option<f64>,
    pub per_level: Vec<(usize, f64)>,
    pub threshold: f64,
    pub pass: bool,
    pub tau_range: (f64, f64),
    pub error: Option<String>,
}

impl CriterionRecord {
    fn evaluated(criterion: Criterion, value: f64, per_level: Vec<(usize, f64)>, threshold: f64, tau_end: f64) -> Self {
        Self { criterion, value: Some(value), per_level, threshold, pass: value < threshold, tau_range: (0.0, tau_end), error: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub records: Vec<CriterionRecord>,
}

impl ConditionReport {
    pub fn get(&self, criterion: Criterion) -> Option<&CriterionRecord> {
        self.records.iter().find(|r| r.criterion == criterion)
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

/// Every condition evaluated at `tau_end`. The first-order value is the worst
/// level; a ratio breakdown fails the compact functional instead of aborting.
pub fn evaluate_conditions(
    coupling: &[CMatrix],
    exact: &CoefficientTrajectory,
    grid: &TimeGrid,
    tau_end: f64,
    threshold: f64,
) -> Result<ConditionReport, PerturbError> {
    let m = exact.initial_level;
    let first = first_order_condition(coupling, grid, m, tau_end)?;
    let first_value = first.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    let (second, second_levels) = second_order_condition(coupling, grid, m, tau_end)?;
    let (ratio, ratio_levels) = ratio_condition_first_order(coupling, grid, m, tau_end)?;
    let compact = match compact_condition_functional(coupling, exact, grid, tau_end) {
        Ok(v) => CriterionRecord::evaluated(Criterion::CompactFunctional, v, Vec::new(), threshold, tau_end),
        Err(e @ PerturbError::RatioBreakdown { .. }) => CriterionRecord {
            criterion: Criterion::CompactFunctional,
            value: None,
            per_level: Vec::new(),
            threshold,
            pass: false,
            tau_range: (0.0, tau_end),
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    Ok(ConditionReport {
        records: vec![
            CriterionRecord::evaluated(Criterion::FirstOrder, first_value, first, threshold, tau_end),
            CriterionRecord::evaluated(Criterion::SecondOrder, second, second_levels, threshold, tau_end),
            CriterionRecord::evaluated(Criterion::RatioFirstIter, ratio, ratio_levels, threshold, tau_end),
            compact,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::evolve_coefficients;

    fn two_level(grid: &TimeGrid, f: impl Fn(f64) -> C64) -> Vec<CMatrix> {
        grid.taus()
            .map(|t| {
                let z = f(t);
                CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), z, z.conj(), C64::new(0.0, 0.0)])
            })
            .collect()
    }

    #[test]
    fn zero_coupling_gives_unit_probabilities_and_zero_conditions() {
        let grid = TimeGrid::new(3.0, 30).unwrap();
        let coupling = vec![CMatrix::zeros(3, 3); 31];
        let exact = evolve_coefficients(&coupling, &grid, 0).unwrap();
        assert!(first_order_probability(&coupling, &grid, 0).unwrap().iter().all(|&p| p == 1.0));
        assert!(second_order_probability(&coupling, &grid, 0).unwrap().iter().all(|&p| p == 1.0));
        assert!(ratio_probability_first_iteration(&coupling, &grid, 0, Some(&exact)).unwrap().iter().all(|&p| p == 1.0));
        let report = evaluate_conditions(&coupling, &exact, &grid, 3.0, DEFAULT_THRESHOLD).unwrap();
        for r in &report.records {
            assert_eq!(r.value, Some(0.0), "{}", r.criterion);
            assert!(r.pass);
        }
    }

    #[test]
    fn oscillating_coupling_has_bounded_first_order_deficit() {
        // M_km = g e^{iΩτ}: |∫|² = (2g/Ω)² sin²(Ωτ/2)
        let (g, omega) = (0.05, 1.3);
        let grid = TimeGrid::new(20.0, 20_000).unwrap();
        let coupling = two_level(&grid, |t| C64::from_polar(g, -omega * t));
        let p1 = first_order_probability(&coupling, &grid, 0).unwrap();
        for (j, p) in p1.iter().enumerate() {
            let expected = (2.0 * g / omega).powi(2) * (0.5 * omega * grid.tau(j)).sin().powi(2);
            assert!((1.0 - p - expected).abs() < 1e-8);
        }
        let cond = first_order_condition(&coupling, &grid, 0, 20.0).unwrap();
        assert_eq!(cond.len(), 1);
        assert!((cond[0].1 - (1.0 - p1[20_000])).abs() < 1e-15);
    }

    #[test]
    fn constant_coupling_second_order_series() {
        // (MM)_mm = g², so S = g²τ²/2 and P₂ = (1 − g²τ²/2)²
        let g = 0.2;
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let coupling = two_level(&grid, |_| C64::new(g, 0.0));
        let p2 = second_order_probability(&coupling, &grid, 0).unwrap();
        for (j, p) in p2.iter().enumerate() {
            let t = grid.tau(j);
            assert!((p - (1.0 - g * g * t * t / 2.0).powi(2)).abs() < 1e-9);
            assert!((p - (g * t).cos().powi(2)).abs() < (g * t).powi(4) + 1e-14);
        }
        let (value, _) = second_order_condition(&coupling, &grid, 0, 2.0).unwrap();
        assert!((value - (g * g * 2.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn ratio_condition_is_real_part_of_second_order_kernel() {
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let coupling = two_level(&grid, |t| C64::from_polar(0.1 + 0.05 * t.sin(), 0.9 * t + 0.2 * t * t));
        let s = second_order_kernel(&coupling, &grid, 1).unwrap();
        let (ratio, _) = ratio_condition_first_order(&coupling, &grid, 1, 5.0).unwrap();
        assert!((ratio - s[500].re).abs() < 1e-15);
    }

    #[test]
    fn compact_functional_is_half_log_deficit() {
        let grid = TimeGrid::new(10.0, 20_000).unwrap();
        let coupling = two_level(&grid, |t| C64::from_polar(0.08, -1.1 * t));
        let exact = evolve_coefficients(&coupling, &grid, 0).unwrap();
        let value = compact_condition_functional(&coupling, &exact, &grid, 10.0).unwrap();
        let p = exact.population(20_000, 0);
        assert!((value + 0.5 * p.ln()).abs() < 1e-8, "{value} vs {}", -0.5 * p.ln());
    }

    #[test]
    fn breakdown_when_initial_level_empties() {
        // constant g with gτ passing π/2 empties level m
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let coupling = two_level(&grid, |_| C64::new(1.0, 0.0));
        let exact = evolve_coefficients(&coupling, &grid, 0).unwrap();
        assert!(matches!(
            ratio_probability_first_iteration(&coupling, &grid, 0, Some(&exact)),
            Err(PerturbError::RatioBreakdown { .. })
        ));
        assert!(matches!(
            compact_condition_functional(&coupling, &exact, &grid, 2.0),
            Err(PerturbError::RatioBreakdown { .. })
        ));
        let report = evaluate_conditions(&coupling, &exact, &grid, 2.0, DEFAULT_THRESHOLD).unwrap();
        let compact = report.get(Criterion::CompactFunctional).unwrap();
        assert!(compact.value.is_none() && !compact.pass);
        // before the dip the functional is still defined
        assert!(compact_condition_functional(&coupling, &exact, &grid, 1.0).is_ok());
    }

    #[test]
    fn off_grid_tau_end_is_rejected() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let coupling = vec![CMatrix::zeros(2, 2); 11];
        assert!(matches!(first_order_condition(&coupling, &grid, 0, 0.55), Err(PerturbError::Grid(_))));
    }
}
