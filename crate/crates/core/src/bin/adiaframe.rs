use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adiaframe::experiments::config::{load_config_with, Diagnostic, Overrides, ScenarioConfig};
use adiaframe::experiments::pipeline::{run_point, sweep, write_sweep, PipelineError, PointResult, Stages};
use adiaframe::experiments::reproduce::{self, Convention, RecipeOptions};
use adiaframe::spectral::DEFAULT_POINTS_PER_PERIOD;

/// Adiabatic-condition diagnostics for driven quantum systems in inertial
/// and rotating frames.
#[derive(Parser)]
#[command(name = "adiaframe", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and recipes.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Grid points per shortest period (drops any explicit `grid.steps`).
    #[arg(long, global = true)]
    steps_per_period: Option<usize>,
    /// Accept grids coarser than the resolution rule.
    #[arg(long, global = true)]
    override_resolution: bool,
    /// Qubit Hamiltonian used by the `reproduce` recipes.
    #[arg(long, global = true, value_enum, default_value_t = ConventionArg::Transition)]
    convention: ConventionArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Printed,
    Transition,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate, compute both coefficient sets and run every frame check.
    Simulate { config: PathBuf },
    /// Condition coefficients only.
    Conditions { config: PathBuf },
    /// Overlap invariance between lab and rotated eigenstates.
    Theorem1 { config: PathBuf },
    /// Constant rotated Hamiltonian check; exits 3 if `H_O` varies.
    Theorem2 { config: PathBuf },
    /// Runs the configured `sweep.parameter` over `sweep.values`.
    Sweep { config: PathBuf },
    /// Regenerates a canned figure or check.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Parses and checks a config without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Fig2a,
    Fig2b,
    Fig2c,
    Nmr,
}

fn load(path: &Path, common: &Common) -> Result<ScenarioConfig, PipelineError> {
    let overrides = Overrides {
        points_per_period: common.steps_per_period,
        override_resolution: common.override_resolution,
    };
    load_config_with(path, overrides).map_err(PipelineError::Config)
}

fn out_dir(common: &Common, cfg: Option<&ScenarioConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn need_frame(cfg: &ScenarioConfig, what: &str) -> Result<(), PipelineError> {
    if cfg.frame.is_none() {
        return Err(PipelineError::Config(vec![Diagnostic {
            line: None,
            field: "frame.kind".into(),
            message: format!("{what} needs a frame"),
        }]));
    }
    Ok(())
}

fn run_single(path: &Path, common: &Common, stages: Stages) -> Result<(ScenarioConfig, PointResult), PipelineError> {
    let cfg = load(path, common)?;
    let p = run_point(&cfg, stages, None)?;
    let dir = out_dir(common, Some(&cfg));
    for f in p.write_artifacts(&dir, &cfg.output_prefix)? {
        log::info!("wrote {}", f.display());
    }
    println!("{}", serde_json::to_string_pretty(&p.summary_json()).unwrap());
    Ok((cfg, p))
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let common = &cli.common;
    let opts = RecipeOptions {
        convention: match common.convention {
            ConventionArg::Printed => Convention::Printed,
            ConventionArg::Transition => Convention::Transition,
        },
        workers: common.workers,
        points_per_period: common.steps_per_period.unwrap_or(DEFAULT_POINTS_PER_PERIOD),
    };
    match &cli.command {
        Command::Simulate { config } => {
            run_single(config, common, Stages::ALL)?;
        }
        Command::Conditions { config } => {
            run_single(config, common, Stages { conditions: true, ..Stages::NONE })?;
        }
        Command::Theorem1 { config } => {
            need_frame(&load(config, common)?, "theorem1")?;
            run_single(config, common, Stages { theorem1: true, ..Stages::NONE })?;
        }
        Command::Theorem2 { config } => {
            need_frame(&load(config, common)?, "theorem2")?;
            let (_, p) = run_single(config, common, Stages { theorem2: true, ..Stages::NONE })?;
            if let Some(Err(reason)) = p.theorem2 {
                return Err(PipelineError::Numerical { message: reason, t: None });
            }
        }
        Command::Sweep { config } => {
            let cfg = load(config, common)?;
            let s = sweep(&cfg, Stages::SWEEP, common.workers)?;
            if s.failures() > 0 {
                log::warn!("{} of {} sweep rows failed", s.failures(), s.rows.len());
            }
            report(&write_sweep(&s, &out_dir(common, Some(&cfg)), &cfg.output_prefix)?);
        }
        Command::Reproduce { target } => {
            let dir = out_dir(common, None);
            let files = match target {
                Target::Fig2a => reproduce::write_fig2a(&reproduce::fig2a(&opts)?, &dir)?,
                Target::Fig2b => reproduce::write_coefficient_sweep(&reproduce::coefficient_sweep(&opts)?, false, &dir)?,
                Target::Fig2c => reproduce::write_coefficient_sweep(&reproduce::coefficient_sweep(&opts)?, true, &dir)?,
                Target::Nmr => reproduce::write_nmr(&reproduce::nmr(&opts)?, &dir)?,
            };
            report(&files);
        }
        Command::Validate { config } => {
            let cfg = load(config, common)?;
            println!("ok: model {}, {} sweep values", cfg.model.name(), cfg.sweep.as_ref().map_or(0, |s| s.values.len()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("{e}");
            if !matches!(e, PipelineError::Config(_)) {
                eprintln!();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
