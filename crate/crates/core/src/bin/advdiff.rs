//! Command-line driver for the advection-diffusion control laboratory.
//!
//! Each subcommand runs one experiment sweep and writes its canonical CSV,
//! a manifest JSON and (with --plot) SVG charts into the output directory.
//! Parameters come from an optional flat `key = value` configuration file;
//! command-line flags override file values, and the subcommand always
//! selects the experiment.  The process exits nonzero if any sweep point
//! failed, so batch scripts can rely on the exit code.

use advdiff::sweep::{parse_config, run_sweep, Experiment, SweepConfig};
use advdiff::types::ControlLocation;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "advdiff",
    version,
    about = "Boundary null-control laboratory for a small-viscosity advection-diffusion system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate an initial datum and report norms.
    Forward(RunArgs),
    /// Run the backward adjoint march and report norms and trace energy.
    Adjoint(RunArgs),
    /// Compute one penalized boundary control per parameter point.
    Hum(RunArgs),
    /// Estimate the worst-case control cost over a datum battery.
    CostSweep(RunArgs),
    /// Measure adjoint decay ratios and fit the dissipation rate model.
    Dissipation(RunArgs),
    /// Evaluate weighted-energy inequality sides across a datum family.
    Carleman(RunArgs),
    /// Evaluate the short-horizon cost lower-bound witness.
    Lowerbound(RunArgs),
    /// Control a 2D strip datum mode-by-mode and reassemble the control.
    Fourier2d(RunArgs),
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::Forward(_) => Experiment::Forward,
            Command::Adjoint(_) => Experiment::Adjoint,
            Command::Hum(_) => Experiment::Hum,
            Command::CostSweep(_) => Experiment::CostSweep,
            Command::Dissipation(_) => Experiment::Dissipation,
            Command::Carleman(_) => Experiment::Carleman,
            Command::Lowerbound(_) => Experiment::LowerBound,
            Command::Fourier2d(_) => Experiment::Fourier2D,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Forward(a)
            | Command::Adjoint(a)
            | Command::Hum(a)
            | Command::CostSweep(a)
            | Command::Dissipation(a)
            | Command::Carleman(a)
            | Command::Lowerbound(a)
            | Command::Fourier2d(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` configuration file (the subcommand still selects
    /// the experiment).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV, JSON and SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses the library default.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write SVG charts where the experiment defines one.
    #[arg(long)]
    plot: bool,
    /// Accept viscosities below 0.02 despite the resolution cost.
    #[arg(long)]
    allow_small_epsilon: bool,
    /// Viscosity grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Zeroth-order coefficient grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    /// Horizon grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    t_final: Option<Vec<f64>>,
    /// Penalty-strength grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    penalty_delta: Option<Vec<f64>>,
    /// Bump-support grid for the lower-bound witness, comma-separated.
    #[arg(long, value_delimiter = ',')]
    bump_delta: Option<Vec<f64>>,
    /// Decay-window lengths for the dissipation experiment, comma-separated.
    #[arg(long, value_delimiter = ',')]
    gaps: Option<Vec<f64>>,
    /// Number of time steps.
    #[arg(long)]
    n_time: Option<usize>,
    /// Control end: gamma0 (outflow) or gamma1 (inflow).
    #[arg(long)]
    location: Option<String>,
}

fn build_config(experiment: Experiment, args: &RunArgs) -> Result<SweepConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let mut c = parse_config(&text).map_err(|e| e.to_string())?;
            c.experiment = experiment;
            c
        }
        None => SweepConfig { experiment, ..Default::default() },
    };
    if let Some(v) = &args.epsilon {
        cfg.epsilons = v.clone();
    }
    if let Some(v) = &args.a {
        cfg.a_values = v.clone();
    }
    if let Some(v) = &args.t_final {
        cfg.horizons = v.clone();
    }
    if let Some(v) = &args.penalty_delta {
        cfg.penalty_deltas = v.clone();
    }
    if let Some(v) = &args.bump_delta {
        cfg.bump_deltas = v.clone();
    }
    if let Some(v) = &args.gaps {
        cfg.gaps = v.clone();
    }
    if let Some(n) = args.n_time {
        cfg.n_time = n;
    }
    if let Some(loc) = &args.location {
        cfg.location = match loc.as_str() {
            "gamma0" => ControlLocation::Gamma0,
            "gamma1" => ControlLocation::Gamma1,
            other => return Err(format!("--location expects gamma0 or gamma1, got '{other}'")),
        };
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.plot {
        cfg.plot = true;
    }
    if args.allow_small_epsilon {
        cfg.allow_small_epsilon = true;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = cli.command.experiment();
    let cfg = match build_config(experiment, cli.command.args()) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::FAILURE;
        }
    };
    match run_sweep(&cfg) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            println!(
                "{}: {} point(s) ok, {} failed",
                experiment.as_str(),
                outcome.n_ok,
                outcome.n_failed
            );
            if outcome.n_failed > 0 {
                eprintln!("error: {} point(s) failed; see manifest.json", outcome.n_failed);
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
