use std::path::PathBuf;

use adiabat::fourier::FourierError;
use adiabat::grid::GridError;
use adiabat::model::ModelError;
use adiabat::perturb::PerturbError;
use adiabat::pipeline::PipelineError;
use thiserror::Error;

use crate::config::ConfigError;

/// Everything that ends a run. Messages carry the failing module as prefix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// model or grid construction rejected the scenario
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("output: cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<PerturbError> for CliError {
    fn from(e: PerturbError) -> Self {
        match e {
            PerturbError::Grid(g) => g.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<FourierError> for CliError {
    fn from(e: FourierError) -> Self {
        match e {
            FourierError::PhaseNotLinear { .. } => CliError::Numerical(e.to_string()),
            // both stem from the scenario, not from the numerics
            FourierError::PeriodMismatch { .. } | FourierError::BadPair(_) => CliError::Input(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config(ConfigError::Invalid("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(GridError::TooFewSteps(1)).exit_code(), 2);
        assert_eq!(CliError::Numerical("spectrum: DegenerateGap".into()).exit_code(), 3);
        let resonance = FourierError::PhaseNotLinear { pair: (1, 0), residual: 1.0 };
        assert_eq!(CliError::from(resonance).exit_code(), 3);
    }
}
