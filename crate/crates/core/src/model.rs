//! Time-dependent Hamiltonian models in dimensionless units.
//!
//! Everything downstream of [`normalize`] works with `h(τ) = H(t)/E_ref` and
//! `τ = E_ref·t/ħ` (ħ = 1 in raw units). The built-in models are already
//! dimensionless.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::grid::TimeGrid;
use crate::linalg::{self, CMatrix, I};

/// Tolerance for every Hermiticity check on model input.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;
/// Closed-form eigenpairs in level order (ascending at τ = 0).
pub type EigenbasisFn = Arc<dyn Fn(f64) -> (Vec<f64>, CMatrix) + Send + Sync>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model: H(0) is the zero matrix")]
    ZeroHamiltonian,
    #[error("model: input matrix '{what}' is not Hermitian (defect {defect:e})")]
    NonHermitianInput { what: String, defect: f64 },
    #[error("model: tabulated sample at row {row} is not Hermitian (defect {defect:e})")]
    NonHermitianSample { row: usize, defect: f64 },
    #[error("model: tabulated tau is not strictly increasing at row {row}")]
    NonMonotoneTime { row: usize },
    #[error("model: parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model: spin variant B needs a time grid")]
    GridRequired,
    #[error("model: {0}")]
    InvalidParameter(String),
    #[error("model: cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone)]
pub struct HamiltonianModel {
    name: String,
    dim: usize,
    evaluate: MatrixFn,
    derivative: Option<MatrixFn>,
    eigenbasis: Option<EigenbasisFn>,
    period: Option<f64>,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("derivative", &self.derivative.is_some())
            .field("eigenbasis", &self.eigenbasis.is_some())
            .field("period", &self.period)
            .finish()
    }
}

impl HamiltonianModel {
    pub fn new(name: impl Into<String>, dim: usize, evaluate: MatrixFn) -> Self {
        Self { name: name.into(), dim, evaluate, derivative: None, eigenbasis: None, period: None }
    }

    pub fn with_derivative(mut self, derivative: MatrixFn) -> Self {
        self.derivative = Some(derivative);
        self
    }

    pub fn with_eigenbasis(mut self, eigenbasis: EigenbasisFn) -> Self {
        self.eigenbasis = Some(eigenbasis);
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn evaluate(&self, tau: f64) -> CMatrix {
        (self.evaluate)(tau)
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn derivative(&self, tau: f64) -> Option<CMatrix> {
        self.derivative.as_ref().map(|d| d(tau))
    }

    pub fn has_eigenbasis(&self) -> bool {
        self.eigenbasis.is_some()
    }

    pub fn analytic_eigenbasis(&self, tau: f64) -> Option<(Vec<f64>, CMatrix)> {
        self.eigenbasis.as_ref().map(|e| e(tau))
    }

    /// Time-independent `h`.
    pub fn constant(name: impl Into<String>, h: CMatrix) -> Result<Self, ModelError> {
        check_hermitian("h", &h)?;
        let dim = h.nrows();
        let zero = CMatrix::zeros(dim, dim);
        Ok(Self::new(name, dim, Arc::new(move |_| h.clone())).with_derivative(Arc::new(move |_| zero.clone())))
    }

    /// `h(τ) = h0 + τ·h1`; a level sweep when `h1` splits levels of `h0`.
    pub fn linear_sweep(name: impl Into<String>, h0: CMatrix, h1: CMatrix) -> Result<Self, ModelError> {
        check_hermitian("h0", &h0)?;
        check_hermitian("h1", &h1)?;
        if h0.shape() != h1.shape() {
            return Err(ModelError::InvalidParameter("h0 and h1 differ in shape".into()));
        }
        let slope = h1.clone();
        Ok(Self::new(name, h0.nrows(), Arc::new(move |tau| &h0 + &h1 * C64::new(tau, 0.0)))
            .with_derivative(Arc::new(move |_| slope.clone())))
    }
}

fn check_hermitian(what: &str, h: &CMatrix) -> Result<(), ModelError> {
    if !h.is_square() {
        return Err(ModelError::InvalidParameter(format!("{what} is not square")));
    }
    let defect = linalg::hermiticity_defect(h);
    if defect > HERMITIAN_TOL || !h.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(ModelError::NonHermitianInput { what: what.to_string(), defect });
    }
    Ok(())
}

/// How a raw Hamiltonian was made dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    /// divisor actually applied to H (always > 0)
    pub reference_energy: f64,
    /// E_m(0) as found, signed
    pub initial_energy: f64,
    /// raw time per unit τ, t = time_scale·τ
    pub time_scale: f64,
    pub initial_level: usize,
    /// true when E_m(0) vanished and the spectral norm was used instead
    pub used_norm_fallback: bool,
}

/// Makes a raw Hamiltonian `H(t)` dimensionless around level `initial_level`
/// of `H(0)`.
pub fn normalize<F>(raw: F, initial_level: usize) -> Result<(HamiltonianModel, NormalizationRecord), ModelError>
where
    F: Fn(f64) -> CMatrix + Send + Sync + 'static,
{
    let h0 = raw(0.0);
    check_hermitian("H(0)", &h0)?;
    let dim = h0.nrows();
    if initial_level >= dim {
        return Err(ModelError::InvalidParameter(format!("initial_level {initial_level} >= dimension {dim}")));
    }
    let (values, _) = linalg::eigh(&h0);
    let norm = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if norm == 0.0 {
        return Err(ModelError::ZeroHamiltonian);
    }
    let initial_energy = values[initial_level];
    let used_norm_fallback = initial_energy.abs() < 1e-12 * norm;
    let reference_energy = if used_norm_fallback { norm } else { initial_energy.abs() };
    let time_scale = 1.0 / reference_energy;
    let model = HamiltonianModel::new(
        "normalized",
        dim,
        Arc::new(move |tau| raw(tau * time_scale) / C64::new(reference_energy, 0.0)),
    );
    let record = NormalizationRecord { reference_energy, initial_energy, time_scale, initial_level, used_norm_fallback };
    Ok((model, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinVariant {
    /// field of fixed magnitude rotating on a cone about z
    A,
    /// `-U_a†(τ) h_a(τ) U_a(τ)` with `U_a` the evolution operator of A
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinHalfParams {
    pub omega0: f64,
    pub omega: f64,
    pub theta: f64,
    pub variant: SpinVariant,
}

impl SpinHalfParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(ModelError::InvalidParameter(format!("omega0 must be > 0 (got {})", self.omega0)));
        }
        if !self.omega.is_finite() {
            return Err(ModelError::InvalidParameter("omega must be finite".into()));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(ModelError::InvalidParameter(format!("theta must lie in [0, pi] (got {})", self.theta)));
        }
        Ok(())
    }
}

/// `h_a(τ) = -(ω0/2)[σx sinθ cos ωτ + σy sinθ sin ωτ + σz cosθ]`.
fn spin_a_matrix(omega0: f64, omega: f64, theta: f64, tau: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    let (sw, cw) = (omega * tau).sin_cos();
    let a = -0.5 * omega0;
    // n·σ = [[cz, nx - i ny], [nx + i ny, -cz]]
    CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(a * c, 0.0), C64::new(a * s * cw, -a * s * sw), C64::new(a * s * cw, a * s * sw), C64::new(-a * c, 0.0)],
    )
}

fn spin_a_derivative(omega0: f64, omega: f64, theta: f64, tau: f64) -> CMatrix {
    let s = theta.sin();
    let (sw, cw) = (omega * tau).sin_cos();
    let a = -0.5 * omega0 * s * omega;
    // d/dτ of (cos ωτ, sin ωτ) = ω(-sin ωτ, cos ωτ)
    let (dx, dy) = (-a * sw, a * cw);
    let zero = C64::new(0.0, 0.0);
    CMatrix::from_row_slice(2, 2, &[zero, C64::new(dx, -dy), C64::new(dx, dy), zero])
}

/// Closed-form eigenpairs of `h_a`: index 0 is the spin aligned with the
/// field axis (value -ω0/2), index 1 the anti-aligned one.
fn spin_a_eigenbasis(omega0: f64, omega: f64, theta: f64, tau: f64) -> (Vec<f64>, CMatrix) {
    let (sh, ch) = (0.5 * theta).sin_cos();
    let e = C64::from_polar(1.0, omega * tau);
    let vectors = CMatrix::from_row_slice(2, 2, &[C64::new(ch, 0.0), C64::new(sh, 0.0), e * sh, -e * ch]);
    (vec![-0.5 * omega0, 0.5 * omega0], vectors)
}

/// Builds the rotating-field spin-1/2 models. Variant B integrates variant A
/// on `grid` and therefore requires it.
pub fn build_spin_half(params: SpinHalfParams, grid: Option<&TimeGrid>) -> Result<HamiltonianModel, ModelError> {
    params.validate()?;
    let SpinHalfParams { omega0, omega, theta, variant } = params;
    match variant {
        SpinVariant::A => {
            let mut model = HamiltonianModel::new(
                "spin_a",
                2,
                Arc::new(move |tau| spin_a_matrix(omega0, omega, theta, tau)),
            )
            .with_derivative(Arc::new(move |tau| spin_a_derivative(omega0, omega, theta, tau)))
            .with_eigenbasis(Arc::new(move |tau| spin_a_eigenbasis(omega0, omega, theta, tau)));
            if omega != 0.0 {
                model = model.with_period(std::f64::consts::TAU / omega.abs());
            }
            Ok(model)
        }
        SpinVariant::B => {
            let grid = grid.ok_or(ModelError::GridRequired)?;
            Ok(build_spin_b(omega0, omega, theta, grid))
        }
    }
}

fn build_spin_b(omega0: f64, omega: f64, theta: f64, grid: &TimeGrid) -> HamiltonianModel {
    let dt = grid.step();
    let mut u = CMatrix::identity(2, 2);
    let mut values = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let tau = grid.tau(k);
        let ud = u.adjoint();
        values.push(-(&ud * spin_a_matrix(omega0, omega, theta, tau) * &u));
        // d/dτ(-U†hU) = -U†ḣU because U̇ = -ihU and h commutes with itself
        slopes.push(-(&ud * spin_a_derivative(omega0, omega, theta, tau) * &u));
        if k < grid.n_steps() {
            let mid = spin_a_matrix(omega0, omega, theta, tau + 0.5 * dt);
            u = linalg::expm_hermitian(&mid, C64::new(0.0, -dt)) * u;
        }
    }
    let table = Arc::new(HermiteTable { dt, n_steps: grid.n_steps(), values, slopes });
    let eval_table = Arc::clone(&table);
    HamiltonianModel::new("spin_b", 2, Arc::new(move |tau| eval_table.value(tau)))
        .with_derivative(Arc::new(move |tau| table.slope(tau)))
}

/// Cubic Hermite interpolation of matrix samples with known slopes.
struct HermiteTable {
    dt: f64,
    n_steps: usize,
    values: Vec<CMatrix>,
    slopes: Vec<CMatrix>,
}

impl HermiteTable {
    fn locate(&self, tau: f64) -> (usize, f64) {
        let x = (tau / self.dt).clamp(0.0, self.n_steps as f64);
        let j = (x.floor() as usize).min(self.n_steps - 1);
        (j, x - j as f64)
    }

    fn value(&self, tau: f64) -> CMatrix {
        let (j, s) = self.locate(tau);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        self.combine(j, h00, h10 * self.dt, h01, h11 * self.dt)
    }

    fn slope(&self, tau: f64) -> CMatrix {
        let (j, s) = self.locate(tau);
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / self.dt;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / self.dt;
        let d11 = 3.0 * s2 - 2.0 * s;
        self.combine(j, d00, d10, d01, d11)
    }

    fn combine(&self, j: usize, a: f64, b: f64, c: f64, d: f64) -> CMatrix {
        let r = |x: f64| C64::new(x, 0.0);
        &self.values[j] * r(a) + &self.slopes[j] * r(b) + &self.values[j + 1] * r(c) + &self.slopes[j + 1] * r(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HVParams {
    /// eigenvalues E_n of the static Hamiltonian H
    pub energies: Vec<f64>,
    /// unitary whose columns are |E_n⟩; identity when absent
    pub eigenbasis: Option<CMatrix>,
    pub v: CMatrix,
}

impl HVParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.energies.len();
        if d == 0 {
            return Err(ModelError::InvalidParameter("energies must not be empty".into()));
        }
        if !self.energies.iter().all(|e| e.is_finite()) {
            return Err(ModelError::InvalidParameter("energies must be finite".into()));
        }
        if self.v.shape() != (d, d) {
            return Err(ModelError::InvalidParameter(format!("V must be {d}x{d}")));
        }
        check_hermitian("V", &self.v)?;
        if let Some(u) = &self.eigenbasis {
            if u.shape() != (d, d) || linalg::unitarity_defect(u) > 1e-10 {
                return Err(ModelError::InvalidParameter("eigenbasis must be a unitary of matching size".into()));
            }
        }
        Ok(())
    }

    fn basis(&self) -> CMatrix {
        let d = self.energies.len();
        self.eigenbasis.clone().unwrap_or_else(|| CMatrix::identity(d, d))
    }

    /// The static Hamiltonian H = Σ E_n |E_n⟩⟨E_n|.
    pub fn static_hamiltonian(&self) -> CMatrix {
        let u = self.basis();
        &u * linalg::real_diagonal(&self.energies) * u.adjoint()
    }

    /// Level order used by the built model: indices into `energies`, ascending.
    pub fn level_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.energies.len()).collect();
        order.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        order
    }

    /// |E_n⟩ for the n-th level of the built model.
    pub fn level_vector(&self, level: usize) -> crate::linalg::CVector {
        let src = self.level_order()[level];
        self.basis().column(src).into_owned()
    }

    pub fn level_energy(&self, level: usize) -> f64 {
        self.energies[self.level_order()[level]]
    }
}

/// `h(τ) = e^{-iτV} H e^{iτV}` with `ḣ = -i[V, h]` and closed-form eigenbasis
/// `e^{-iτV}|E_n⟩`.
pub fn build_hv_model(params: &HVParams) -> Result<HamiltonianModel, ModelError> {
    params.validate()?;
    let d = params.energies.len();
    let h_static = params.static_hamiltonian();
    let (v_values, v_vectors) = linalg::eigh(&params.v);
    let order = params.level_order();
    let sorted_energies: Vec<f64> = order.iter().map(|&k| params.energies[k]).collect();
    let basis = params.basis();
    let mut sorted_basis = CMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        sorted_basis.set_column(dst, &basis.column(src));
    }

    let propagator = Arc::new(move |tau: f64| {
        let mut scaled = v_vectors.clone();
        for (k, &lambda) in v_values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -tau * lambda);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= phase;
            }
        }
        &scaled * v_vectors.adjoint()
    });

    let eval_prop = Arc::clone(&propagator);
    let eval_h = h_static.clone();
    let evaluate: MatrixFn = Arc::new(move |tau| {
        let w = eval_prop(tau);
        &w * &eval_h * w.adjoint()
    });
    let deriv_prop = Arc::clone(&propagator);
    let v = params.v.clone();
    let derivative: MatrixFn = Arc::new(move |tau| {
        let w = deriv_prop(tau);
        let h = &w * &h_static * w.adjoint();
        (&v * &h - &h * &v) * (-I)
    });
    let eigenbasis: EigenbasisFn = Arc::new(move |tau| (sorted_energies.clone(), propagator(tau) * &sorted_basis));
    Ok(HamiltonianModel::new("hv", d, evaluate).with_derivative(derivative).with_eigenbasis(eigenbasis))
}

/// Reads a tabulated model (see [`write_tabulated`] for the layout) and
/// interpolates it linearly in τ.
pub fn load_tabulated_model(path: impl AsRef<Path>) -> Result<HamiltonianModel, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    parse_tabulated(&text)
}

pub fn parse_tabulated(text: &str) -> Result<HamiltonianModel, ModelError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (line_no, header) = lines.next().ok_or(ModelError::Parse { line: 0, message: "empty file".into() })?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d: &usize| d > 0)
        .ok_or_else(|| ModelError::Parse { line: line_no, message: format!("expected 'dim=<d>', got '{header}'") })?;
    let expected = 1 + dim * (dim + 1);

    let mut taus: Vec<f64> = Vec::new();
    let mut samples: Vec<CMatrix> = Vec::new();
    for (row, (line_no, line)) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ModelError::Parse { line: line_no, message: e.to_string() })?;
        if fields.len() != expected {
            return Err(ModelError::Parse {
                line: line_no,
                message: format!("expected {expected} numbers, found {}", fields.len()),
            });
        }
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Parse { line: line_no, message: "non-finite value".into() });
        }
        let tau = fields[0];
        if let Some(&last) = taus.last() {
            if tau <= last {
                return Err(ModelError::NonMonotoneTime { row });
            }
        }
        let mut h = CMatrix::zeros(dim, dim);
        let mut idx = 1;
        let mut defect = 0.0_f64;
        for i in 0..dim {
            for j in i..dim {
                let z = C64::new(fields[idx], fields[idx + 1]);
                idx += 2;
                if i == j {
                    defect = defect.max(2.0 * z.im.abs());
                    h[(i, i)] = C64::new(z.re, 0.0);
                } else {
                    h[(i, j)] = z;
                    h[(j, i)] = z.conj();
                }
            }
        }
        if defect > HERMITIAN_TOL {
            return Err(ModelError::NonHermitianSample { row, defect });
        }
        taus.push(tau);
        samples.push(h);
    }
    if samples.is_empty() {
        return Err(ModelError::Parse { line: line_no, message: "no samples".into() });
    }
    Ok(HamiltonianModel::new(
        "tabulated",
        dim,
        Arc::new(move |tau| linear_lookup(&taus, &samples, tau)),
    ))
}

fn linear_lookup(taus: &[f64], samples: &[CMatrix], tau: f64) -> CMatrix {
    let n = taus.len();
    if n == 1 || tau <= taus[0] {
        return samples[0].clone();
    }
    if tau >= taus[n - 1] {
        return samples[n - 1].clone();
    }
    let j = taus.partition_point(|&t| t <= tau) - 1;
    let s = (tau - taus[j]) / (taus[j + 1] - taus[j]);
    &samples[j] * C64::new(1.0 - s, 0.0) + &samples[j + 1] * C64::new(s, 0.0)
}

/// Writes `model` sampled on `grid` in the tabulated format: a `dim=<d>`
/// header, then per sample `tau` followed by re/im pairs of the upper
/// triangle (diagonal included) in row-major order.
pub fn write_tabulated(model: &HamiltonianModel, grid: &TimeGrid) -> String {
    use std::fmt::Write;
    let d = model.dim();
    let mut out = format!("dim={d}\n");
    for tau in grid.taus() {
        let h = model.evaluate(tau);
        let _ = write!(out, "{tau:.17e}");
        for i in 0..d {
            for j in i..d {
                let _ = write!(out, " {:.17e} {:.17e}", h[(i, j)].re, h[(i, j)].im);
            }
        }
        out.push('\n');
    }
    out
}
