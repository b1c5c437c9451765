//! Quadrature and differentiation on uniform samples.

use num_complex::Complex64 as C64;

/// Running composite-trapezoid integral; `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

pub fn cumulative_trapezoid_complex(values: &[C64], dt: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = C64::new(0.0, 0.0);
    out.push(acc);
    for w in values.windows(2) {
        acc += (w[0] + w[1]) * (0.5 * dt);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Second-order derivative: central in the interior, one-sided three-point at
/// the two ends. Needs at least three samples.
pub fn derivative(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3, "derivative needs at least three samples");
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt);
    for k in 1..n - 1 {
        out[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
    }
    out
}

/// Unwraps a phase sequence so consecutive samples differ by less than π.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (k, &p) in phases.iter().enumerate() {
        if k > 0 {
            let prev = phases[k - 1];
            let jump = p - prev;
            offset -= TAU * ((jump + PI) / TAU).floor();
        }
        out.push(p + offset);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let dt = 0.1;
        let v: Vec<f64> = (0..11).map(|k| 2.0 * k as f64 * dt + 1.0).collect();
        let c = cumulative_trapezoid(&v, dt);
        assert!((c[10] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_is_exact_for_quadratic() {
        let dt = 0.05;
        let v: Vec<f64> = (0..20).map(|k| (k as f64 * dt).powi(2)).collect();
        let d = derivative(&v, dt);
        for (k, x) in d.iter().enumerate() {
            assert!((x - 2.0 * k as f64 * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_removes_jumps() {
        let raw: Vec<f64> = (0..200)
            .map(|k| {
                let t = 0.3 * k as f64;
                C64::from_polar(1.0, t).arg()
            })
            .collect();
        let u = unwrap_phase(&raw);
        for (k, x) in u.iter().enumerate() {
            assert!((x - 0.3 * k as f64).abs() < 1e-12);
        }
    }
}
