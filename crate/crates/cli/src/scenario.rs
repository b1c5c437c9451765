//! Resolving a typed config into a model, grid and pipeline options, and the
//! computations behind each subcommand.

use std::f64::consts::TAU;

use adiabat::fourier::{self, CouplingHarmonics, FourierConditionReport, PhaseLinearity};
use adiabat::model::{
    self, build_hv_model, build_spin_half, HVParams, NormalizationRecord, SpinHalfParams, SpinVariant,
};
use adiabat::perturb::{self, ConditionReport, PerturbError};
use adiabat::pipeline::{self, Analysis, PipelineOptions};
use adiabat::spectrum::{Gauge, GammaMethod};
use adiabat::{CMatrix, HamiltonianModel, TimeGrid, C64};

use crate::config::{ConfigError, GammaChoice, GaugeChoice, MatrixSpec, ModelKind, ModelSpec, Output, ScenarioConfig};
use crate::error::CliError;

fn invalid(message: impl Into<String>) -> CliError {
    ConfigError::Invalid(message.into()).into()
}

fn matrix(name: &str, spec: &MatrixSpec) -> Result<CMatrix, CliError> {
    let len = spec.re.len();
    let d = (len as f64).sqrt().round() as usize;
    if d == 0 || d * d != len {
        return Err(invalid(format!("model.{name}.re must hold d*d entries (got {len})")));
    }
    let im = match &spec.im {
        Some(im) if im.len() != len => {
            return Err(invalid(format!("model.{name}.im has {} entries, model.{name}.re has {len}", im.len())))
        }
        Some(im) => im.clone(),
        None => vec![0.0; len],
    };
    let entries: Vec<C64> = spec.re.iter().zip(&im).map(|(&r, &i)| C64::new(r, i)).collect();
    Ok(CMatrix::from_row_slice(d, d, &entries))
}

fn require<'a, T>(value: &'a Option<T>, key: &str, kind: ModelKind) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| invalid(format!("model.{key} is required for kind {}", kind_name(kind))))
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::SpinA => "spin_a",
        ModelKind::SpinB => "spin_b",
        ModelKind::Hv => "hv",
        ModelKind::Constant => "constant",
        ModelKind::Linear => "linear",
        ModelKind::Tabulated => "tabulated",
    }
}

/// Rejects keys the chosen kind would silently ignore.
fn reject_unused(spec: &ModelSpec) -> Result<(), CliError> {
    let used: &[&str] = match spec.kind {
        ModelKind::SpinA | ModelKind::SpinB => &["omega0", "omega", "theta"],
        ModelKind::Hv => &["energies", "basis", "v"],
        ModelKind::Constant => &["h"],
        ModelKind::Linear => &["h0", "h1"],
        ModelKind::Tabulated => &["path"],
    };
    let present = [
        ("omega0", spec.omega0.is_some()),
        ("omega", spec.omega.is_some()),
        ("theta", spec.theta.is_some()),
        ("energies", spec.energies.is_some()),
        ("basis", spec.basis.is_some()),
        ("v", spec.v.is_some()),
        ("h", spec.h.is_some()),
        ("h0", spec.h0.is_some()),
        ("h1", spec.h1.is_some()),
        ("path", spec.path.is_some()),
    ];
    match present.iter().find(|(key, set)| *set && !used.contains(key)) {
        Some((key, _)) => Err(invalid(format!("model.{key} is not used by kind {}", kind_name(spec.kind)))),
        None => Ok(()),
    }
}

/// Natural period of the scenario, if any: `fourier.period`, else 2π/|ω| for
/// the spin models.
fn period_of(config: &ScenarioConfig) -> Option<f64> {
    config.fourier.period.or(match config.model.kind {
        ModelKind::SpinA | ModelKind::SpinB => config.model.omega.filter(|w| *w != 0.0).map(|w| TAU / w.abs()),
        _ => None,
    })
}

fn build_model(config: &ScenarioConfig, grid: &TimeGrid) -> Result<HamiltonianModel, CliError> {
    let spec = &config.model;
    reject_unused(spec)?;
    let kind = spec.kind;
    Ok(match kind {
        ModelKind::SpinA | ModelKind::SpinB => {
            let params = SpinHalfParams {
                omega0: spec.omega0.unwrap_or(1.0),
                omega: *require(&spec.omega, "omega", kind)?,
                theta: *require(&spec.theta, "theta", kind)?,
                variant: if kind == ModelKind::SpinA { SpinVariant::A } else { SpinVariant::B },
            };
            build_spin_half(params, Some(grid))?
        }
        ModelKind::Hv => {
            let params = HVParams {
                energies: require(&spec.energies, "energies", kind)?.clone(),
                eigenbasis: spec.basis.as_ref().map(|b| matrix("basis", b)).transpose()?,
                v: matrix("v", require(&spec.v, "v", kind)?)?,
            };
            build_hv_model(&params)?
        }
        ModelKind::Constant => HamiltonianModel::constant("constant", matrix("h", require(&spec.h, "h", kind)?)?)?,
        ModelKind::Linear => HamiltonianModel::linear_sweep(
            "linear",
            matrix("h0", require(&spec.h0, "h0", kind)?)?,
            matrix("h1", require(&spec.h1, "h1", kind)?)?,
        )?,
        ModelKind::Tabulated => model::load_tabulated_model(require(&spec.path, "path", kind)?)?,
    })
}

/// A validated scenario ready to run.
pub struct Scenario {
    /// the input config with every default and derived value filled in
    pub config: ScenarioConfig,
    pub model: HamiltonianModel,
    pub grid: TimeGrid,
    pub options: PipelineOptions,
    pub normalization: Option<NormalizationRecord>,
}

impl Scenario {
    pub fn resolve(mut config: ScenarioConfig) -> Result<Self, CliError> {
        let tau_end = match (config.grid.tau_end, config.grid.periods) {
            (Some(t), None) => t,
            (None, Some(p)) => {
                let period = period_of(&config)
                    .ok_or_else(|| invalid("grid.periods needs a periodic model or fourier.period"))?;
                p * period
            }
            (Some(_), Some(_)) => return Err(invalid("set only one of grid.tau_end and grid.periods")),
            (None, None) => return Err(invalid("one of grid.tau_end and grid.periods is required")),
        };
        let grid = TimeGrid::new(tau_end, config.grid.n_steps)?;
        if config.output.stride == 0 {
            return Err(invalid("output.stride must be >= 1"));
        }
        if config.model.normalize && config.model.kind == ModelKind::SpinB {
            return Err(invalid("model.normalize is not supported for spin_b (tabulated on the run grid)"));
        }

        let mut model = build_model(&config, &grid)?;
        let m = config.initial_level;
        if m >= model.dim() {
            return Err(invalid(format!("initial_level {m} must be < dimension {}", model.dim())));
        }
        let mut normalization = None;
        if config.model.normalize {
            let raw = model.clone();
            let (scaled, record) = model::normalize(move |t| raw.evaluate(t), m)?;
            model = scaled;
            normalization = Some(record);
        }

        let [k, pm] = config.fourier.pair.unwrap_or([if m == 0 { 1 } else { 0 }, m]);
        if k == pm || k >= model.dim() || pm >= model.dim() {
            return Err(invalid(format!("fourier.pair [{k}, {pm}] must name two distinct levels < {}", model.dim())));
        }

        config.grid.tau_end = Some(tau_end);
        config.fourier.pair = Some([k, pm]);
        config.fourier.period = period_of(&config);
        if matches!(config.model.kind, ModelKind::SpinA | ModelKind::SpinB) {
            config.model.omega0.get_or_insert(1.0);
        }

        let options = PipelineOptions {
            initial_level: m,
            gauge: match config.gauge {
                GaugeChoice::Continuity => Gauge::ContinuityFixed,
                GaugeChoice::Analytic => Gauge::Analytic,
            },
            gamma_method: match config.gamma.method {
                GammaChoice::FiniteDifference => GammaMethod::FiniteDifference,
                GammaChoice::HellmannFeynman => GammaMethod::HellmannFeynman,
            },
            gap_tol: config.threshold.gap_tol,
            numeric_derivative: true,
        };
        Ok(Self { config, model, grid, options, normalization })
    }

    pub fn wants(&self, output: Output) -> bool {
        self.config.outputs.contains(&output)
    }

    pub fn analyse(&self) -> Result<Analysis, CliError> {
        Ok(pipeline::run(&self.model, &self.grid, &self.options)?)
    }

    pub fn conditions(&self, analysis: &Analysis) -> Result<ConditionReport, CliError> {
        Ok(perturb::evaluate_conditions(
            analysis.frame.couplings(),
            analysis.coefficients(),
            &self.grid,
            self.grid.tau_end(),
            self.config.threshold.condition,
        )?)
    }
}

/// Everything behind `evolve`: columns not requested in `outputs` are None.
pub struct Evolution {
    pub analysis: Analysis,
    pub p_first: Option<Vec<f64>>,
    pub p_second: Option<Vec<f64>>,
    /// Err holds the breakdown diagnostic
    pub p_ratio: Option<Result<Vec<f64>, String>>,
    pub conditions: Option<ConditionReport>,
}

pub fn evolve(scenario: &Scenario) -> Result<Evolution, CliError> {
    let analysis = scenario.analyse()?;
    let m = scenario.options.initial_level;
    let coupling = analysis.frame.couplings();
    let grid = &scenario.grid;
    let p_first =
        scenario.wants(Output::First).then(|| perturb::first_order_probability(coupling, grid, m)).transpose()?;
    let p_second =
        scenario.wants(Output::Second).then(|| perturb::second_order_probability(coupling, grid, m)).transpose()?;
    let p_ratio = if scenario.wants(Output::Ratio) {
        Some(match perturb::ratio_probability_first_iteration(coupling, grid, m, Some(analysis.coefficients())) {
            Ok(p) => Ok(p),
            Err(e @ PerturbError::RatioBreakdown { .. }) => Err(e.to_string()),
            Err(e) => return Err(e.into()),
        })
    } else {
        None
    };
    let conditions = scenario.wants(Output::Conditions).then(|| scenario.conditions(&analysis)).transpose()?;
    Ok(Evolution { analysis, p_first, p_second, p_ratio, conditions })
}

pub struct FourierOutcome {
    pub linearity: PhaseLinearity,
    pub harmonics: CouplingHarmonics,
    pub report: FourierConditionReport,
    /// |∫₀^τ_end M_km|² from the sampled coupling
    pub direct_deficit: f64,
    /// the same from the harmonic series
    pub series_deficit: f64,
}

pub fn fourier(scenario: &Scenario) -> Result<FourierOutcome, CliError> {
    let config = &scenario.config;
    let period = config.fourier.period.ok_or_else(|| invalid("fourier needs a periodic model or fourier.period"))?;
    let [k, m] = config.fourier.pair.expect("resolved");
    let frame = pipeline::build_frame(&scenario.model, &scenario.grid, &scenario.options)?;
    let linearity = fourier::check_linear_phase(&frame, (k, m), config.threshold.linearity_tol)?;
    let modulus: Vec<f64> = (0..scenario.grid.len()).map(|j| frame.gamma().at(j)[(k, m)].norm()).collect();
    let harmonics = fourier::fourier_decompose_coupling(&modulus, scenario.grid.step(), period, config.fourier.n_harmonics)?;
    let report =
        fourier::fourier_condition_report(&linearity, &harmonics, config.threshold.condition, config.threshold.resonance_tol)?;
    let tau_end = scenario.grid.tau_end();
    let direct: Vec<C64> = frame.couplings().iter().map(|x| x[(k, m)]).collect();
    let integral = adiabat::numeric::cumulative_trapezoid_complex(&direct, scenario.grid.step());
    let direct_deficit = integral.last().expect("non-empty grid").norm_sqr();
    let series_deficit = fourier::series_deficit(&linearity, &harmonics, tau_end);
    Ok(FourierOutcome { linearity, harmonics, report, direct_deficit, series_deficit })
}

/// Closed-form ratios for the rotating spin: our |γ| convention and the
/// full-field expression without the factor ½.
pub fn spin_reference_ratios(config: &ScenarioConfig) -> Option<(f64, f64)> {
    if config.model.kind != ModelKind::SpinA {
        return None;
    }
    let (w0, w, th) = (config.model.omega0?, config.model.omega?, config.model.theta?);
    let full = (w * th.sin() / (w0 + w * th.cos())).abs();
    Some((0.5 * full, full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use std::path::PathBuf;

    fn scenario(text: &str) -> Result<Scenario, CliError> {
        Scenario::resolve(RawConfig::parse(text, PathBuf::new())?.typed()?)
    }

    const SPIN: &str = "model.kind = \"spin_a\"\nmodel.omega = 0.1\nmodel.theta = 0.5\ngrid.n_steps = 400\n";

    #[test]
    fn periods_resolve_to_tau_end() {
        let s = scenario(&format!("{SPIN}grid.periods = 2\n")).unwrap();
        assert!((s.grid.tau_end() - 2.0 * TAU / 0.1).abs() < 1e-12);
        assert_eq!(s.config.grid.tau_end, Some(s.grid.tau_end()));
        assert_eq!(s.config.fourier.pair, Some([1, 0]));
        assert_eq!(s.config.model.omega0, Some(1.0));
    }

    #[test]
    fn grid_must_be_given_exactly_once() {
        assert_eq!(scenario(SPIN).err().unwrap().exit_code(), 2);
        assert!(scenario(&format!("{SPIN}grid.tau_end = 1\ngrid.periods = 1\n")).is_err());
    }

    #[test]
    fn level_out_of_range_is_a_config_error() {
        let err = scenario(&format!("{SPIN}grid.tau_end = 1\ninitial_level = 2\n")).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("initial_level"));
    }

    #[test]
    fn unused_model_key_is_rejected() {
        let err = scenario(&format!("{SPIN}grid.tau_end = 1\nmodel.energies = [0, 1]\n")).err().unwrap();
        assert!(err.to_string().contains("model.energies"), "{err}");
    }

    #[test]
    fn matrices_must_be_square_and_consistent() {
        let base = "model.kind = \"constant\"\ngrid.tau_end = 1\ngrid.n_steps = 4\n";
        assert!(scenario(&format!("{base}model.h.re = [1, 0, 0]\n")).is_err());
        assert!(scenario(&format!("{base}model.h.re = [1, 0, 0, 1]\nmodel.h.im = [0]\n")).is_err());
        let err = scenario(&format!("{base}model.h.re = [1, 1, 0, 1]\n")).err().unwrap();
        assert!(err.to_string().starts_with("model:"), "{err}");
    }

    #[test]
    fn normalization_rescales_by_initial_energy() {
        let s = scenario("model.kind = \"constant\"\nmodel.h.re = [-4, 0, 0, 2]\nmodel.normalize = true\ngrid.tau_end = 1\ngrid.n_steps = 4\n")
            .unwrap();
        let record = s.normalization.unwrap();
        assert_eq!(record.initial_energy, -4.0);
        assert!((s.model.evaluate(0.0)[(1, 1)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_ratios_differ_by_two() {
        let s = scenario(&format!("{SPIN}grid.tau_end = 1\n")).unwrap();
        let (ours, full) = spin_reference_ratios(&s.config).unwrap();
        assert!((full - 2.0 * ours).abs() < 1e-15);
    }
}
