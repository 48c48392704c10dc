//! Subcommand definitions and dispatch.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use shks_core::experiments::{
    embedding_constant, estimate_kappa, gbm_moment_check, monte_carlo_survival,
    spectral_convergence, temporal_convergence, threshold_scan, transform_refinement, McReport,
    StudyError,
};
use shks_core::integrator::{run_path, transform_compare};
use thiserror::Error;
use toml::Value;

use crate::config::{self, ConfigFileError, Flat, RunConfig};
use crate::output::{self, to_toml, OutputDir, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "shks", version, about = "Stochastic hyperbolic Keller-Segel simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with dotted keys (noise.type, ic.kind, ...)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the `seed` key
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "shks-out")]
    pub out_dir: PathBuf,
    /// KEY=VALUE override, repeatable; wins over the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trajectory: norms over time plus terminal status
    Simulate(Common),
    /// Survival ensemble with a Wilson interval
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of paths; overrides `mc.paths`
        #[arg(long)]
        paths: Option<i64>,
    },
    /// Survival probability across noise intensities (`scan.parameter`, `scan.values`)
    Scan(Common),
    /// Direct EM against the transformed random PDE (linear noise)
    TransformCheck(Common),
    /// Random-search estimate of the energy constant
    Kappa(Common),
    /// Exact-sampling check of the GBM moment identity
    GbmCheck(Common),
    /// Strong error against the finest step of `converge.dt_ladder`
    ConvergeDt(Common),
    /// Projection error of `u_0` over `converge.n_ladder`
    ConvergeN(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Montecarlo { .. } => "montecarlo",
            Command::Scan(_) => "scan",
            Command::TransformCheck(_) => "transform-check",
            Command::Kappa(_) => "kappa",
            Command::GbmCheck(_) => "gbm-check",
            Command::ConvergeDt(_) => "converge-dt",
            Command::ConvergeN(_) => "converge-n",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Montecarlo { common, .. } => common,
            Command::Simulate(c)
            | Command::Scan(c)
            | Command::TransformCheck(c)
            | Command::Kappa(c)
            | Command::GbmCheck(c)
            | Command::ConvergeDt(c)
            | Command::ConvergeN(c) => c,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Aborted(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Aborted(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl From<ConfigFileError> for RunError {
    fn from(e: ConfigFileError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<StudyError> for RunError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Aborted { .. } => RunError::Aborted(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<shks_core::integrator::ConfigError> for RunError {
    fn from(e: shks_core::integrator::ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn collect_overrides(cmd: &Command) -> Result<Flat, RunError> {
    let common = cmd.common();
    let mut flat = Flat::new();
    for arg in &common.set {
        let (k, v) = config::parse_override(arg)?;
        flat.insert(k, v);
    }
    if let Some(seed) = common.seed {
        let seed = i64::try_from(seed)
            .map_err(|_| RunError::Config("--seed must fit in a signed 64-bit integer".into()))?;
        flat.insert("seed".into(), Value::Integer(seed));
    }
    if let Command::Montecarlo { paths: Some(p), .. } = cmd {
        flat.insert("mc.paths".into(), Value::Integer(*p));
    }
    Ok(flat)
}

#[derive(Serialize)]
struct McOutput<'a> {
    report: &'a McReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_constant: Option<f64>,
}

#[derive(Serialize)]
struct ScanEntry<'a> {
    value: f64,
    report: &'a McReport,
}

#[derive(Serialize)]
struct ScanOutput<'a> {
    parameter: &'static str,
    rows: Vec<ScanEntry<'a>>,
}

#[derive(Serialize)]
struct TransformOutput {
    path_max_discrepancy: f64,
    path_final_discrepancy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted_at: Option<f64>,
    refinement: shks_core::experiments::TransformRefinement,
}

#[derive(Serialize)]
struct KappaOutput {
    estimate: shks_core::experiments::KappaEstimate,
    embedding_constant: f64,
    c_tilde: f64,
}

/// Runs one subcommand end to end and returns the manifest it wrote.
pub fn run(cli: Cli) -> Result<RunManifest, RunError> {
    let started = Instant::now();
    let cmd = &cli.command;
    let common = cmd.common();
    let file_values = match &common.config {
        Some(p) => config::read_file(p)?,
        None => Flat::new(),
    };
    let overrides = collect_overrides(cmd)?;
    let cfg = RunConfig::load(&file_values, &overrides)?;
    let mut out = OutputDir::create(&common.out_dir)?;
    let seed = cfg.seed;
    info!("{} with seed {seed} into {}", cmd.name(), common.out_dir.display());

    match cmd {
        Command::Simulate(_) => {
            let outcome = run_path(&cfg.solver, seed, 0)?;
            out.write("trajectory.csv", &output::trajectory_csv(&outcome.record))?;
            out.write(
                "trajectory.toml",
                &output::trajectory_meta(&outcome.record, &cfg.echo()),
            )?;
        }
        Command::Montecarlo { .. } => {
            let theory = config::resolve_theory(&cfg)?;
            let solver = config::effective_solver(&cfg, theory.as_ref())?;
            let (report, paths) =
                monte_carlo_survival(&solver, cfg.mc_paths, seed, theory.as_ref().map(|t| t.params))?;
            out.write("ensemble.csv", &output::ensemble_csv(&paths))?;
            out.write(
                "report.toml",
                &to_toml(&McOutput {
                    report: &report,
                    c_tilde: theory.as_ref().map(|t| t.params.c_tilde),
                    kappa_hat: theory.as_ref().and_then(|t| t.kappa.as_ref()).map(|k| k.kappa_hat),
                    embedding_constant: theory.as_ref().and_then(|t| t.embedding),
                }),
            )?;
        }
        Command::Scan(_) => {
            let theory = config::resolve_theory(&cfg)?;
            let solver = config::effective_solver(&cfg, theory.as_ref())?;
            let rows = threshold_scan(
                &solver,
                cfg.scan_parameter,
                &cfg.scan_values,
                cfg.mc_paths,
                seed,
                theory.as_ref().map(|t| t.params),
            )?;
            out.write("scan.csv", &output::scan_csv(&rows))?;
            out.write(
                "scan.toml",
                &to_toml(&ScanOutput {
                    parameter: cfg.scan_parameter.name(),
                    rows: rows
                        .iter()
                        .map(|r| ScanEntry {
                            value: r.value,
                            report: &r.report,
                        })
                        .collect(),
                }),
            )?;
        }
        Command::TransformCheck(_) => {
            let path = transform_compare(&cfg.solver, seed, 0)?;
            let refinement =
                transform_refinement(&cfg.solver, &cfg.converge.dt_ladder, cfg.converge.paths, seed)?;
            out.write("transform.csv", &output::transform_series_csv(&path))?;
            out.write("transform_refinement.csv", &output::transform_refinement_csv(&refinement))?;
            out.write(
                "transform.toml",
                &to_toml(&TransformOutput {
                    path_max_discrepancy: path.max_discrepancy,
                    path_final_discrepancy: path.final_discrepancy,
                    aborted_at: path.aborted_at,
                    refinement,
                }),
            )?;
        }
        Command::Kappa(_) => {
            let grid = &cfg.solver.grid;
            let estimate = estimate_kappa(grid, cfg.solver.s, cfg.kappa_samples, &cfg.kappa_amplitudes, seed)?;
            let d = embedding_constant(grid, cfg.solver.s);
            out.write("kappa.csv", &output::kappa_csv(&estimate.ratios, &cfg.kappa_amplitudes))?;
            let c_tilde = estimate.kappa_hat * d;
            out.write(
                "kappa.toml",
                &to_toml(&KappaOutput {
                    estimate,
                    embedding_constant: d,
                    c_tilde,
                }),
            )?;
        }
        Command::GbmCheck(_) => {
            let g = &cfg.gbm;
            let report = gbm_moment_check(g.lambda, g.rho, g.t, g.paths, seed, g.exponent)?;
            out.write("gbm.toml", &to_toml(&report))?;
        }
        Command::ConvergeDt(_) => {
            let study = temporal_convergence(&cfg.solver, &cfg.converge.dt_ladder, cfg.converge.paths, seed)?;
            out.write("converge_dt.csv", &output::temporal_csv(&study))?;
            out.write("converge_dt.toml", &to_toml(&study))?;
        }
        Command::ConvergeN(_) => {
            let study = spectral_convergence(
                &cfg.solver.grid,
                &cfg.solver.initial,
                cfg.solver.s,
                cfg.converge.r,
                &cfg.converge.n_ladder,
            )?;
            out.write("converge_n.csv", &output::spectral_csv(&study))?;
            out.write("converge_n.toml", &to_toml(&study))?;
        }
    }

    let mut manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: seed,
        outputs: out.written().to_vec(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        config: config::unflatten(&cfg.echo()),
        file_values: config::unflatten(&file_values),
        overrides: config::unflatten(&overrides),
    };
    manifest.outputs.push("manifest.toml".into());
    out.write("manifest.toml", &manifest.to_toml())?;
    Ok(manifest)
}
