//! `sunada-zeta`: one subcommand per pipeline.
//!
//! Exit status is 0 when every verdict passes, 1 when a verdict fails or a
//! computation errors, and 2 for bad configuration. Failures print a JSON
//! summary on stderr.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use report::Format;

#[derive(Debug, Parser)]
#[command(name = "sunada-zeta", version, about = "Sunada pairs, geodesic flows and flat-trace L-functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Report file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tol: Tolerances,
}

/// Overrides for the library defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Tolerances {
    /// Closed-orbit closure tolerance.
    #[arg(long = "tol.closure", global = true)]
    pub closure: Option<f64>,
    /// Tolerance for identifying time-shifted orbits.
    #[arg(long = "tol.merge", global = true)]
    pub merge: Option<f64>,
    /// `‖Ũ V₁ − V₂ Ũ‖_max` gate.
    #[arg(long = "tol.intertwining", global = true)]
    pub intertwining: Option<f64>,
    /// Relative tolerance of computed weights against a closed-form oracle.
    #[arg(long = "tol.weight", global = true)]
    pub weight: Option<f64>,
    /// Monte Carlo relative standard error target.
    #[arg(long = "tol.mc", global = true)]
    pub mc: Option<f64>,
}

impl Tolerances {
    fn validate(&self) -> Result<(), String> {
        let named = [
            ("tol.closure", self.closure),
            ("tol.merge", self.merge),
            ("tol.intertwining", self.intertwining),
            ("tol.weight", self.weight),
            ("tol.mc", self.mc),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("--{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gassmann certificate and intertwiner residuals for a subgroup pair.
    Gassmann {
        /// Group file (`degree: N`, then one generator per line).
        #[arg(long)]
        group: PathBuf,
        /// Generators of H₁ in cycle notation, separated by `;`.
        #[arg(long)]
        h1: String,
        #[arg(long)]
        h2: String,
    },
    /// Discrete intertwining and flat-trace equality over seeded dynamics.
    Sunada {
        /// Diagram file `{group_file, h1_gens, h2_gens, model}`.
        #[arg(long)]
        diagram: PathBuf,
        #[arg(long, default_value_t = sunada_core::defaults::T_MAX)]
        tmax: usize,
        #[arg(long, default_value_t = sunada_core::defaults::DYNAMICS_SEEDS)]
        seeds: usize,
    },
    /// Closed geodesics up to a length bound.
    Flow {
        /// Manifold file `{kind, params}`.
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long)]
        lmax: f64,
        /// Grid seeds per periodic coordinate (0: symmetric candidates only).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Flat-trace weights, the L-series and its partial sums.
    Zeta {
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long)]
        lmax: f64,
        /// Evaluation point `re` or `re,im`; repeatable.
        #[arg(long = "s", value_parser = parse_complex)]
        s: Vec<Complex64>,
        /// JSON file for the partial sums when the series is written as CSV.
        #[arg(long)]
        lvalues: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Oscillatory integrals against the stationary-phase prediction.
    Statphase {
        /// Fixture `{phase, amplitude, N, h_list}`.
        fixture: PathBuf,
        /// Replaces the fixture's h list.
        #[arg(long, value_delimiter = ',')]
        hlist: Option<Vec<f64>>,
    },
}

fn parse_complex(text: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re` or `re,im`, got `{text}`")),
    }
}

/// A computation either ran to a verdict or could not start.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Pipeline(anyhow::Error),
}

pub fn config<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Config(e.into())
}

pub fn pipeline<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Pipeline(e.into())
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    status: &'a str,
    command: &'a str,
    failures: Vec<String>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gassmann { .. } => "gassmann",
        Command::Sunada { .. } => "sunada",
        Command::Flow { .. } => "flow",
        Command::Zeta { .. } => "zeta",
        Command::Statphase { .. } => "statphase",
    }
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("SUNADA_ZETA_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| format!("SUNADA_ZETA_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            return Err("SUNADA_ZETA_THREADS must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn report_failure(status: &str, command: &str, failures: Vec<String>) {
    let summary = Summary { status, command, failures };
    eprint!("{}", report::to_json_string(&summary).unwrap_or_else(|_| format!("{summary:?}\n")));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    if let Err(msg) = configure_threads().and_then(|_| cli.tol.validate()) {
        report_failure("config_error", name, vec![msg]);
        return ExitCode::from(2);
    }
    match commands::run(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            report_failure("fail", name, failures);
            ExitCode::from(1)
        }
        Err(CliError::Config(e)) => {
            report_failure("config_error", name, vec![format!("{e:#}")]);
            ExitCode::from(2)
        }
        Err(CliError::Pipeline(e)) => {
            report_failure("error", name, vec![format!("{e:#}")]);
            ExitCode::from(1)
        }
    }
}
