use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid: tau_end must be finite and > 0 (got {0})")]
    NonPositiveEnd(f64),
    #[error("grid: n_steps must be >= 2 (got {0})")]
    TooFewSteps(usize),
    #[error("grid: tau={tau} is not a grid sample (nearest {nearest})")]
    OffGrid { tau: f64, nearest: f64 },
}

/// Uniform grid τ_k = k·Δτ, k = 0..=n_steps, Δτ = tau_end / n_steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    tau_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(tau_end: f64, n_steps: usize) -> Result<Self, GridError> {
        if !(tau_end.is_finite() && tau_end > 0.0) {
            return Err(GridError::NonPositiveEnd(tau_end));
        }
        if n_steps < 2 {
            return Err(GridError::TooFewSteps(n_steps));
        }
        Ok(Self { tau_end, n_steps })
    }

    pub fn tau_end(&self) -> f64 {
        self.tau_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of samples, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.tau_end / self.n_steps as f64
    }

    pub fn tau(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.tau_end
        } else {
            k as f64 * self.step()
        }
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.tau(k))
    }

    /// Same span, half the step.
    pub fn halved(&self) -> Self {
        Self { tau_end: self.tau_end, n_steps: 2 * self.n_steps }
    }

    /// Index of the sample at `tau`; `tau` must sit on the grid.
    pub fn index_of(&self, tau: f64) -> Result<usize, GridError> {
        let x = tau / self.step();
        let k = x.round();
        if k < 0.0 || k as usize > self.n_steps || (x - k).abs() > 1e-6 {
            let nearest = self.tau(k.clamp(0.0, self.n_steps as f64) as usize);
            return Err(GridError::OffGrid { tau, nearest });
        }
        Ok(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn samples_are_uniform_and_end_exactly() {
        let g = TimeGrid::new(3.0, 7).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.tau(0), 0.0);
        assert_eq!(g.tau(7), 3.0);
        let taus: Vec<f64> = g.taus().collect();
        for w in taus.windows(2) {
            assert!((w[1] - w[0] - g.step()).abs() < 1e-15);
        }
        assert_eq!(g.index_of(3.0).unwrap(), 7);
        assert!(g.index_of(0.2).is_err());
    }
}
