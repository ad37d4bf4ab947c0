//! Command-line front end: ground state, LCG fit, grid reference run, Rothe
//! run and comparison of two runs, all driven by one TOML config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_compare, cmd_fit, cmd_groundstate, cmd_reference, cmd_rothe, CompareSummary, FitSummary,
    GroundStateSummary, ReferenceSummary, RotheSummary,
};
pub use config::{FitSection, GridSection, ModelSection, OutputSection, Overrides, RotheSection, RunConfig};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "lcg-rothe", version, about = "Rothe propagation of Gaussian wave packets in a 1D strong-field model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for column assembly (default: all cores; 1 for reproducible timing).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized fit restarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Time step.
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Per-step Rothe tolerance.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true)]
    pub grid_l: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid ground state and its energy.
    Groundstate,
    /// Least-squares LCG(K) fit to the grid ground state.
    Fit {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Crank–Nicolson reference propagation.
    Reference,
    /// Rothe propagation of the fitted LCG state.
    Rothe,
    /// Compare the snapshots of two runs.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            h: self.h,
            epsilon: self.epsilon,
            t_end: self.t_end,
            grid_n: self.grid_n,
            grid_l: self.grid_l,
        }
    }

    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // Fails only if a pool already exists, e.g. when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = cli.config()?;
    match &cli.command {
        Command::Groundstate => {
            let s = cmd_groundstate(&cfg)?;
            println!("E0 = {} (residual {:e}, {} iterations)", s.energy, s.residual, s.iterations);
        }
        Command::Fit { k } => {
            let s = cmd_fit(&cfg, k.unwrap_or(cfg.fit.k))?;
            println!("K = {}: residual^2 = {:e}", s.k, s.residual_sq);
        }
        Command::Reference => {
            let s = cmd_reference(&cfg)?;
            println!(
                "{} steps, norm^2 {} -> {} (max drift {:e})",
                s.steps, s.initial_norm_sq, s.final_norm_sq, s.max_norm_drift
            );
        }
        Command::Rothe => {
            let s = cmd_rothe(&cfg)?;
            println!(
                "{} steps in {:.1}s, final K = {}, max F = {:e}, single-iteration fraction {:.4}",
                s.steps, s.wall_seconds, s.final_k, s.max_objective, s.single_iteration_fraction
            );
        }
        Command::Compare { run_a, run_b } => {
            let s = cmd_compare(run_a, run_b, &cfg.output.dir)?;
            println!("{} snapshots, final L2 error {:e}", s.times.len(), s.final_l2());
        }
    }
    Ok(())
}

/// 2 for configuration and input mismatches, 3 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::GridMismatch(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
