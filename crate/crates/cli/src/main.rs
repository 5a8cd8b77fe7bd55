//! `endow-hjb`: solve, inspect and validate the endowment investment problem.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
//! 4 validation failure, 1 anything else (I/O).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endowment_hjb::config::RunConfig;
use endowment_hjb::hjb::Spacing;
use endowment_hjb::Error;

#[derive(Debug, Parser)]
#[command(name = "endow-hjb", version, about = "Optimal investment with a random endowment")]
pub struct Cli {
    /// TOML configuration; the reference parameters when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(flatten)]
    pub grid: GridFlags,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GridFlags {
    #[arg(long, global = true)]
    pub grid_nt: Option<usize>,
    #[arg(long, global = true)]
    pub grid_nz: Option<usize>,
    #[arg(long, global = true)]
    pub z_min: Option<f64>,
    #[arg(long, global = true)]
    pub z_max: Option<f64>,
    /// Equal steps in ln z.
    #[arg(long, global = true, conflicts_with = "linear_grid")]
    pub log_grid: bool,
    /// Equal steps in z.
    #[arg(long, global = true)]
    pub linear_grid: bool,
    #[arg(long, global = true)]
    pub tol_policy: Option<f64>,
    #[arg(long, global = true)]
    pub max_policy_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the reduced equation; writes surface.json, surface.csv, manifest.json.
    Solve,
    /// Evaluate or export the feedback policy of a solved surface.
    Policy {
        #[command(subcommand)]
        action: PolicyAction,
    },
    /// Asymptotic diagnostics of a solved surface.
    Asymptotics {
        #[command(subcommand)]
        action: AsymptoticsAction,
    },
    /// Monte Carlo estimates.
    Mc {
        #[command(subcommand)]
        action: McAction,
    },
    /// Solve for each correlation and export the controls as CSV.
    RhoSweep {
        /// Comma-separated correlations, e.g. `-0.5,0,0.5,0.95`.
        #[arg(long, allow_hyphen_values = true, default_value = "-0.5,0,0.5,0.95")]
        rhos: String,
        /// Constraint set for the sweep as `lo,hi`; the config's when omitted.
        #[arg(long, allow_hyphen_values = true)]
        constraint: Option<String>,
    },
    /// Run the named checks; exits 4 if any fails.
    Validate {
        /// Comma-separated check names; all when omitted.
        #[arg(long)]
        checks: Option<String>,
    },
    /// Reference solve plus the figure data sets and ρ sweep.
    ReproPaper,
}

#[derive(Debug, Subcommand)]
pub enum PolicyAction {
    /// Print the control at `t,x,y`.
    Eval {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Write `(t, z, pi)` in long CSV format.
    Export {
        #[arg(long)]
        surface: PathBuf,
        /// Output path; `<out-dir>/policy.csv` when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AsymptoticsAction {
    /// Ratio of u to the no-endowment profile at z_max / 2 for every time row.
    Report {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum McAction {
    /// Estimate the value from `t,x,y` under a named policy.
    Value {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// `pde`, `merton` or `constant:<pi>`.
        #[arg(long, default_value = "pde")]
        policy: String,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            error: anyhow::anyhow!(message.into()),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            error: anyhow::anyhow!(message.into()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_config_error() => 2,
            Error::Domain(_) => 2,
            Error::NoConvergence { .. } | Error::SingularSystem { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        match error.downcast::<Error>() {
            Ok(e) => e.into(),
            Err(error) => Failure { code: 1, error },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

/// Loads the config and applies command-line overrides.
fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::reference(),
    };
    let g = &cli.grid;
    if let Some(v) = g.grid_nt {
        cfg.grid.nt = v;
    }
    if let Some(v) = g.grid_nz {
        cfg.grid.nz = v;
    }
    if let Some(v) = g.z_min {
        cfg.grid.z_min = v;
    }
    if let Some(v) = g.z_max {
        cfg.grid.z_max = v;
    }
    if g.log_grid {
        cfg.grid.spacing = Spacing::Logarithmic;
    }
    if g.linear_grid {
        cfg.grid.spacing = Spacing::Linear;
    }
    if let Some(v) = g.tol_policy {
        cfg.scheme.tol_policy = v;
    }
    if let Some(v) = g.max_policy_iters {
        cfg.scheme.max_policy_iters = v;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(format!("--threads: {e}")))?;
    }
    let cfg = resolve_config(cli)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    commands::dispatch(cli, cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
