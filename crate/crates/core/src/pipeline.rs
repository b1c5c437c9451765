//! Model → spectrum → frame → both evolutions, in one call.

use thiserror::Error;

use crate::frame::{FrameError, InvariantFrame};
use crate::grid::TimeGrid;
use crate::model::HamiltonianModel;
use crate::propagate::{self, CoefficientTrajectory, EvolutionResult, PropagateError, StateTrajectory};
use crate::spectrum::{self, AdiabaticSpectrum, Gauge, GammaMethod, SpectrumError, DEFAULT_GAP_TOL};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub initial_level: usize,
    pub gauge: Gauge,
    pub gamma_method: GammaMethod,
    pub gap_tol: f64,
    /// finite-difference ḣ for Hellmann-Feynman when the model has none
    pub numeric_derivative: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            initial_level: 0,
            gauge: Gauge::ContinuityFixed,
            gamma_method: GammaMethod::FiniteDifference,
            gap_tol: DEFAULT_GAP_TOL,
            numeric_derivative: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub frame: InvariantFrame,
    pub evolution: EvolutionResult,
    pub initial_level: usize,
}

impl Analysis {
    pub fn grid(&self) -> &TimeGrid {
        self.frame.grid()
    }

    pub fn coefficients(&self) -> &CoefficientTrajectory {
        &self.evolution.coefficients
    }

    pub fn states(&self) -> &StateTrajectory {
        &self.evolution.states
    }

    pub fn p_exact(&self) -> &[f64] {
        &self.evolution.p_exact
    }

    pub fn p_direct(&self) -> &[f64] {
        &self.evolution.p_direct
    }

    /// max_k |P_exact − P_direct|.
    pub fn route_discrepancy(&self) -> f64 {
        self.p_exact().iter().zip(self.p_direct()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Builds the invariant frame of `model` on `grid`.
pub fn build_frame(model: &HamiltonianModel, grid: &TimeGrid, options: &PipelineOptions) -> Result<InvariantFrame, PipelineError> {
    let spectrum = spectrum::solve_quasistationary(model, grid, options.gap_tol, options.gauge)?;
    frame_from_spectrum(model, spectrum, options)
}

/// Frame from an already solved (possibly redressed) spectrum.
pub fn frame_from_spectrum(
    model: &HamiltonianModel,
    spectrum: AdiabaticSpectrum,
    options: &PipelineOptions,
) -> Result<InvariantFrame, PipelineError> {
    let gamma = spectrum::compute_gamma_with(&spectrum, model, options.gamma_method, options.numeric_derivative)?;
    Ok(InvariantFrame::build(spectrum, gamma)?)
}

/// Both evolutions of level `options.initial_level` against a built frame.
pub fn evolve_in_frame(model: &HamiltonianModel, frame: InvariantFrame, initial_level: usize) -> Result<Analysis, PipelineError> {
    let grid = *frame.grid();
    if initial_level >= frame.dim() {
        return Err(PropagateError::LevelOutOfRange { level: initial_level, dim: frame.dim() }.into());
    }
    let coefficients = propagate::evolve_coefficients(frame.couplings(), &grid, initial_level)?;
    let start = frame.spectrum().eigenvector(0, initial_level);
    let states = propagate::evolve_schrodinger(model, &start, &grid)?;
    let p_exact = propagate::survival_probability_exact(&coefficients);
    let p_direct = propagate::survival_probability_direct(&states, &frame, initial_level)?;
    let norm_residual = propagate::norm_residuals(&coefficients);
    Ok(Analysis {
        frame,
        evolution: EvolutionResult { p_exact, p_direct, norm_residual, coefficients, states },
        initial_level,
    })
}

pub fn run(model: &HamiltonianModel, grid: &TimeGrid, options: &PipelineOptions) -> Result<Analysis, PipelineError> {
    let frame = build_frame(model, grid, options)?;
    evolve_in_frame(model, frame, options.initial_level)
}
