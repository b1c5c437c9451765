mod config;
mod error;
mod report;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adiabat::perturb::Criterion;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{ConfigError, RawConfig, ScenarioConfig, SWEEPABLE};
use error::CliError;
use scenario::Scenario;

/// Survival probabilities and adiabaticity conditions for driven few-level
/// quantum systems.
#[derive(Parser, Debug)]
#[command(name = "adiabat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// exact, direct and perturbative survival probabilities over the grid
    Evolve(RunArgs),
    /// every adiabaticity condition at the end of the grid
    Check(RunArgs),
    /// harmonic analysis of one coupling and its ratio condition
    Fourier(RunArgs),
    /// one summary row per value of `sweep.param`
    Sweep(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// scenario file
    #[arg(long)]
    config: PathBuf,
    /// output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// worker threads for sweeps (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// pass threshold for condition values (overrides threshold.condition)
    #[arg(long)]
    threshold: Option<f64>,
}

fn typed(raw: &RawConfig, args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let mut config = raw.typed()?;
    if let Some(t) = args.threshold {
        if !(t.is_finite() && t > 0.0) {
            return Err(ConfigError::Invalid(format!("--threshold must be > 0 (got {t})")).into());
        }
        config.threshold.condition = t;
    }
    Ok(config)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Write { path: dir.to_path_buf(), message: e.to_string() })
}

fn evolve(raw: &RawConfig, args: &RunArgs) -> Result<(), CliError> {
    let scenario = Scenario::resolve(typed(raw, args)?)?;
    let run = scenario::evolve(&scenario)?;
    prepare_out(&args.out)?;
    let csv_path = args.out.join("evolution.csv");
    let (header, rows) = report::evolution_table(&scenario, &run);
    report::write_csv(&csv_path, &header, rows)?;
    let summary_path = args.out.join("summary.json");
    let files = vec!["evolution.csv".to_string(), "summary.json".to_string()];
    report::write_json(&summary_path, &report::evolve_summary(&scenario, &run, &files))?;
    if let Some(Err(message)) = &run.p_ratio {
        eprintln!("warning: P_ratio unavailable: {message}");
    }
    println!("min P_exact = {}", report::float(report::min_p_exact(&run)));
    println!("wrote {} and {}", csv_path.display(), summary_path.display());
    Ok(())
}

fn check(raw: &RawConfig, args: &RunArgs) -> Result<(), CliError> {
    let scenario = Scenario::resolve(typed(raw, args)?)?;
    let analysis = scenario.analyse()?;
    let conditions = scenario.conditions(&analysis)?;
    prepare_out(&args.out)?;
    let path = args.out.join("check.json");
    report::write_json(&path, &report::check_json(&scenario, &conditions))?;
    for record in &conditions.records {
        let value = record.value.map_or_else(|| "n/a".to_string(), report::float);
        println!("{:<18} {value}  {}", record.criterion.to_string(), if record.pass { "pass" } else { "fail" });
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn fourier(raw: &RawConfig, args: &RunArgs) -> Result<(), CliError> {
    let scenario = Scenario::resolve(typed(raw, args)?)?;
    let outcome = scenario::fourier(&scenario)?;
    prepare_out(&args.out)?;
    let path = args.out.join("fourier.json");
    report::write_json(&path, &report::fourier_json(&scenario, &outcome))?;
    println!(
        "max |Gamma_l/(Omega0+Omega_l)| = {}  {}",
        report::float(outcome.report.max_ratio),
        if outcome.report.pass { "pass" } else { "fail" }
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// One sweep point: (min P_exact, condition values) or a numerical failure.
type SweepPoint = Result<(f64, Vec<Option<f64>>), String>;

fn sweep_point(raw: &RawConfig, args: &RunArgs, key: &str, value: f64) -> Result<SweepPoint, CliError> {
    let mut raw = raw.clone();
    raw.set_number(key, value)?;
    let scenario = Scenario::resolve(typed(&raw, args)?)?;
    let run = scenario.analyse().and_then(|a| {
        let conditions = scenario.conditions(&a)?;
        let min_p = a.p_exact().iter().copied().fold(f64::INFINITY, f64::min);
        Ok((min_p, Criterion::ALL.iter().map(|c| conditions.get(*c).and_then(|r| r.value)).collect()))
    });
    match run {
        Ok(point) => Ok(Ok(point)),
        Err(CliError::Numerical(message)) => Ok(Err(message)),
        Err(other) => Err(other),
    }
}

fn sweep(raw: &RawConfig, args: &RunArgs) -> Result<(), CliError> {
    let spec = typed(raw, args)?
        .sweep
        .ok_or_else(|| ConfigError::Invalid("sweep needs sweep.param and sweep.values".into()))?;
    if !SWEEPABLE.contains(&spec.param.as_str()) {
        return Err(ConfigError::Invalid(format!(
            "unknown sweep parameter '{}' (expected one of {})",
            spec.param,
            SWEEPABLE.join(", ")
        ))
        .into());
    }
    if spec.values.is_empty() {
        return Err(ConfigError::Invalid("sweep.values is empty".into()).into());
    }
    // par_iter().collect() keeps input order whatever the scheduling
    let points: Vec<SweepPoint> = spec
        .values
        .par_iter()
        .map(|&v| sweep_point(raw, args, &spec.param, v))
        .collect::<Result<_, _>>()?;

    let mut header = vec![spec.param.clone(), "min_P_exact".to_string(), "max_deficit".to_string()];
    header.extend(Criterion::ALL.iter().map(|c| c.to_string()));
    header.push("status".to_string());
    let nan = report::float(f64::NAN);
    let rows = spec.values.iter().zip(&points).map(|(&v, point)| {
        let mut row = vec![report::float(v)];
        match point {
            Ok((min_p, values)) => {
                row.push(report::float(*min_p));
                row.push(report::float(1.0 - min_p));
                row.extend(values.iter().map(|x| report::float(x.unwrap_or(f64::NAN))));
                row.push("ok".to_string());
            }
            Err(message) => {
                row.extend(std::iter::repeat_n(nan.clone(), 2 + Criterion::ALL.len()));
                row.push(message.clone());
            }
        }
        row
    });
    prepare_out(&args.out)?;
    let path = args.out.join("sweep.csv");
    report::write_csv(&path, &header, rows)?;
    let failed = points.iter().filter(|p| p.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} sweep points failed numerically (see status column)", points.len());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Evolve(args) | Command::Check(args) | Command::Fourier(args) | Command::Sweep(args)) = &cli.command;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(ConfigError::Invalid("--threads must be >= 1".into()).into());
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let raw = RawConfig::load(&args.config)?;
    match &cli.command {
        Command::Evolve(args) => evolve(&raw, args),
        Command::Check(args) => check(&raw, args),
        Command::Fourier(args) => fourier(&raw, args),
        Command::Sweep(args) => sweep(&raw, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
