use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use uikf::checks::{builtin_stability_reports, run_properties, stability_report, StabilityReport};
use uikf::sim::benchmark::{case_config, default_seeds, Case, DEFAULT_DURATION};
use uikf::sim::output::{fmt_sig, write_summary_file, write_timeseries_file};
use uikf::sim::{run_scenario, RmseRow, ScenarioConfig, ScenarioResult};
use uikf::{ConfigFile, DEFAULT_DT};

#[derive(Debug, Parser)]
#[command(name = "uikf", version, about = "State and unknown-input estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one of the three benchmark cases with both filters.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        case: u8,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a scenario described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the property suites or print stability radii.
    Check {
        suite: Suite,
        /// Also report on the model in this file (stability only).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Properties,
    Stability,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, env = "UIKF_OUT", default_value = "out")]
    out: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
}

/// Exit status map: 1 usage/config, 2 estimator or check failure, 3 I/O.
#[derive(Debug)]
enum Failure {
    Config(String),
    Estimator(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Estimator(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Estimator(m) => write!(f, "estimation failed: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Reproduce { case, run } => reproduce(case, &run),
        Command::Simulate { config, run } => simulate(&config, &run),
        Command::Check { suite, config } => check(suite, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("uikf: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>, Failure> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(Failure::Config(format!("--{name} must be positive, got {x}")))
        }
        other => Ok(other),
    }
}

fn reproduce(case: u8, run: &RunArgs) -> Result<(), Failure> {
    let case = Case::from_number(case).ok_or_else(|| Failure::Config(format!("no case {case}")))?;
    let dt = positive("dt", run.dt)?.unwrap_or(DEFAULT_DT);
    let duration = positive("duration", run.duration)?.unwrap_or(DEFAULT_DURATION);
    let seeds = run.seeds.clone().unwrap_or_else(default_seeds);
    let cfg = case_config::<f64>(case, seeds, dt, duration)
        .map_err(|e| Failure::Config(e.to_string()))?;
    execute(&cfg, &run.out)
}

fn simulate(path: &Path, run: &RunArgs) -> Result<(), Failure> {
    let file = ConfigFile::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let mut cfg = file
        .scenario::<f64>(&stem)
        .map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(dt) = positive("dt", run.dt)? {
        cfg.model = cfg
            .model
            .with_dt(dt)
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(d) = positive("duration", run.duration)? {
        cfg.duration = d;
    }
    if let Some(seeds) = &run.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    execute(&cfg, &run.out)
}

fn execute(cfg: &ScenarioConfig<f64>, out: &Path) -> Result<(), Failure> {
    let result = run_scenario(cfg).map_err(|e| Failure::Estimator(e.to_string()))?;
    write_outputs(&result, out)?;
    print_summary(&result);
    Ok(())
}

fn write_outputs(result: &ScenarioResult<f64>, out: &Path) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let first = &result.runs[0];
    for series in &first.estimates {
        let path = out.join(format!("{}_{}.csv", result.name, series.kind.name()));
        write_timeseries_file(&path, first, series.kind).map_err(|e| io(&path, e))?;
    }
    let rows: Vec<(String, RmseRow)> = result
        .summary
        .iter()
        .map(|r| (result.name.clone(), r.clone()))
        .collect();
    let path = out.join(format!("{}_summary.csv", result.name));
    write_summary_file(&path, &rows).map_err(|e| io(&path, e))
}

fn print_summary(result: &ScenarioResult<f64>) {
    let Some(row) = result.summary.first() else {
        return;
    };
    println!(
        "RMSE over {} seed(s), {}",
        result.runs.len(),
        result.name
    );
    let mut header = format!("{:<10}", "method");
    for i in 1..=row.x.len() {
        header.push_str(&format!(" {:>12}", format!("x{i}")));
    }
    for i in 1..=row.d.len() {
        header.push_str(&format!(" {:>12}", format!("d{i}")));
    }
    println!("{header}");
    for row in &result.summary {
        let mut line = format!("{:<10}", row.estimator.label());
        for v in row.x.iter().chain(&row.d) {
            line.push_str(&format!(" {:>12}", fmt_sig(*v)));
        }
        println!("{line}");
    }
}

fn check(suite: Suite, config: Option<&Path>) -> Result<(), Failure> {
    match suite {
        Suite::Properties => {
            let outcomes = run_properties();
            let mut failed = Vec::new();
            for c in &outcomes {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", c.name, c.detail);
                if !c.passed {
                    failed.push(c.name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Estimator(format!(
                    "failed properties: {}",
                    failed.join(", ")
                )))
            }
        }
        Suite::Stability => {
            let mut reports =
                builtin_stability_reports().map_err(|e| Failure::Estimator(e.to_string()))?;
            if let Some(path) = config {
                let file = ConfigFile::load(path).map_err(|e| Failure::Config(e.to_string()))?;
                let model = file
                    .model::<f64>()
                    .map_err(|e| Failure::Config(e.to_string()))?;
                let n = model.dims().n_x;
                let p0 = DMatrix::identity(n, n)
                    * file.scenario.p0_scale.unwrap_or(uikf::r4skf::DEFAULT_P0_SCALE);
                let name = path.display().to_string();
                reports.push(
                    stability_report(&name, &model, &p0)
                        .map_err(|e| Failure::Estimator(e.to_string()))?,
                );
            }
            print_stability(&reports);
            let unstable: Vec<&str> = reports
                .iter()
                .filter(|r| !r.stable())
                .map(|r| r.model.as_str())
                .collect();
            if unstable.is_empty() {
                Ok(())
            } else {
                Err(Failure::Estimator(format!(
                    "filter error dynamics not contractive for: {}",
                    unstable.join(", ")
                )))
            }
        }
    }
}

fn print_stability(reports: &[StabilityReport]) {
    println!("{:<24} {:>14} {:>14}", "model", "rho(A_bar)", "rho(A_tilde)");
    for r in reports {
        println!(
            "{:<24} {:>14} {:>14}",
            r.model,
            fmt_sig(r.predictor_radius),
            fmt_sig(r.filter_radius)
        );
    }
}
