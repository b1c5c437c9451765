//! CSV and JSON emission. Floats are written with 17 significant digits in
//! scientific notation so regression files round-trip exactly.

use std::path::Path;

use adiabat::perturb::{ConditionReport, CriterionRecord};
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::scenario::{self, Evolution, FourierOutcome, Scenario};

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Write { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    writer.write_record(header).map_err(|e| write_error(path, e))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| write_error(path, e))?;
    }
    writer.flush().map_err(|e| write_error(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_error(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_error(path, e))
}

/// The evolution table: tau, P_exact, P_direct, P_first, P_second, P_ratio,
/// norm_residual, |c_n|^2. Columns not requested hold NaN.
pub fn evolution_table(scenario: &Scenario, run: &Evolution) -> (Vec<String>, Vec<Vec<String>>) {
    use crate::config::Output;
    let a = &run.analysis;
    let d = a.frame.dim();
    let mut header: Vec<String> =
        ["tau", "P_exact", "P_direct", "P_first", "P_second", "P_ratio", "norm_residual"].map(String::from).to_vec();
    header.extend((0..d).map(|n| format!("|c_{n}|^2")));

    let column = |values: Option<&Vec<f64>>, k: usize| float(values.map_or(f64::NAN, |v| v[k]));
    let exact = scenario.wants(Output::Exact).then(|| a.p_exact().to_vec());
    let direct = scenario.wants(Output::Direct).then(|| a.p_direct().to_vec());
    let ratio = run.p_ratio.as_ref().and_then(|r| r.as_ref().ok());
    let rows = (0..scenario.grid.len())
        .step_by(scenario.config.output.stride)
        .map(|k| {
            let mut row = vec![
                float(scenario.grid.tau(k)),
                column(exact.as_ref(), k),
                column(direct.as_ref(), k),
                column(run.p_first.as_ref(), k),
                column(run.p_second.as_ref(), k),
                column(ratio, k),
                float(a.evolution.norm_residual[k]),
            ];
            row.extend((0..d).map(|n| float(a.coefficients().population(k, n))));
            row
        })
        .collect();
    (header, rows)
}

fn config_value(scenario: &Scenario) -> Value {
    serde_json::to_value(&scenario.config).expect("config serialises")
}

fn number(x: f64) -> Value {
    // JSON has no NaN/inf; those become null
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn criterion_json(record: &CriterionRecord) -> Value {
    let per_level: Map<String, Value> = record.per_level.iter().map(|(k, v)| (k.to_string(), number(*v))).collect();
    json!({
        "criterion": record.criterion.to_string(),
        "value": record.value.map_or(Value::Null, number),
        "threshold": number(record.threshold),
        "pass": record.pass,
        "tau_end": number(record.tau_range.1),
        "per_level": per_level,
        "error": record.error,
    })
}

pub fn check_json(scenario: &Scenario, report: &ConditionReport) -> Value {
    json!({
        "command": "check",
        "initial_level": scenario.options.initial_level,
        "tau_end": number(scenario.grid.tau_end()),
        "all_pass": report.all_pass(),
        "criteria": report.records.iter().map(criterion_json).collect::<Vec<_>>(),
        "resolved_config": config_value(scenario),
    })
}

fn condition_values(report: &ConditionReport) -> Value {
    let map: Map<String, Value> = report
        .records
        .iter()
        .map(|r| (r.criterion.to_string(), r.value.map_or(Value::Null, number)))
        .collect();
    Value::Object(map)
}

pub fn min_p_exact(run: &Evolution) -> f64 {
    run.analysis.p_exact().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn evolve_summary(scenario: &Scenario, run: &Evolution, files: &[String]) -> Value {
    let a = &run.analysis;
    let normalization = scenario.normalization.map(|r| {
        json!({
            "reference_energy": number(r.reference_energy),
            "initial_energy": number(r.initial_energy),
            "time_scale": number(r.time_scale),
            "used_norm_fallback": r.used_norm_fallback,
        })
    });
    json!({
        "command": "evolve",
        "model": scenario.model.name(),
        "dim": scenario.model.dim(),
        "initial_level": scenario.options.initial_level,
        "tau_end": number(scenario.grid.tau_end()),
        "n_steps": scenario.grid.n_steps(),
        "min_gap": number(a.frame.spectrum().min_gap()),
        "min_p_exact": number(min_p_exact(run)),
        "final_p_exact": number(*a.p_exact().last().expect("non-empty grid")),
        "max_route_discrepancy": number(a.route_discrepancy()),
        "conservation_residual": number(adiabat::propagate::conservation_residual(a.coefficients())),
        "undefined_arg_samples": a.frame.potential().undefined.len(),
        "ratio_method": match &run.p_ratio {
            Some(Err(message)) => Value::String(message.clone()),
            Some(Ok(_)) => Value::String("ok".into()),
            None => Value::Null,
        },
        "conditions": run.conditions.as_ref().map(condition_values),
        "normalization": normalization,
        "files": files,
        "resolved_config": config_value(scenario),
    })
}

pub fn fourier_json(scenario: &Scenario, outcome: &FourierOutcome) -> Value {
    let lin = &outcome.linearity;
    let harmonics: Vec<Value> = outcome
        .harmonics
        .harmonics
        .iter()
        .map(|h| {
            json!({
                "l": h.l,
                "omega": number(h.omega),
                "re": number(h.gamma.re),
                "im": number(h.gamma.im),
                "modulus": number(h.gamma.norm()),
            })
        })
        .collect();
    let ratios: Vec<Value> = outcome
        .report
        .ratios
        .iter()
        .map(|r| json!({ "l": r.l, "omega_l": number(r.omega_l), "ratio": number(r.ratio), "resonant": r.resonant }))
        .collect();
    let reference = scenario::spin_reference_ratios(&scenario.config)
        .map(|(ours, full)| json!({ "half_angle_coupling": number(ours), "full_field_expression": number(full) }));
    json!({
        "command": "fourier",
        "pair": [lin.pair.0, lin.pair.1],
        "linearity": {
            "is_linear": lin.is_linear,
            "alpha0": number(lin.alpha0),
            "omega0": number(lin.omega0),
            "max_residual": number(lin.max_residual),
        },
        "period": number(outcome.harmonics.period),
        "mean_square": number(outcome.harmonics.mean_square),
        "tail_energy": number(outcome.harmonics.tail_energy),
        "harmonics": harmonics,
        "condition": {
            "omega0": number(outcome.report.omega0),
            "max_ratio": number(outcome.report.max_ratio),
            "threshold": number(outcome.report.threshold),
            "pass": outcome.report.pass,
            "resonances": outcome.report.resonances,
            "ratios": ratios,
        },
        "deficit_at_tau_end": {
            "direct": number(outcome.direct_deficit),
            "series": number(outcome.series_deficit),
        },
        "closed_form": reference,
        "resolved_config": config_value(scenario),
    })
}
