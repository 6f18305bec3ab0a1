//! koopgraph: fit low-rank estimates of graph feature dynamics and train
//! spectral-filter models on top of them.

mod commands;

use clap::{Parser, Subcommand};
use koopgraph::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "koopgraph", version, about, max_term_width = 100)]
pub(crate) struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub(crate) config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub(crate) out: Option<PathBuf>,

    /// Override the seed from the config.
    #[arg(long, global = true)]
    pub(crate) seed: Option<u64>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    pub(crate) quiet: bool,

    #[command(subcommand)]
    pub(crate) command: Command,
}

#[derive(Subcommand)]
pub(crate) enum Command {
    /// Fit DMD on the configured dataset and write the result bundle.
    DmdFit,
    /// Train a model for the given task and write metrics + checkpoint.
    Train {
        /// One of: nodeclass, linkpred, stg.
        #[arg(long)]
        task: String,
    },
    /// Quantum-evolution conservation demo on the chain graph.
    DemoSchrodinger {
        /// Number of lattice nodes.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Initial packet center.
        #[arg(long, default_value_t = 2.0)]
        x0: f64,
        /// Integrator time step.
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Integration steps (also the number of snapshot pairs).
        #[arg(long, default_value_t = 240)]
        steps: usize,
        /// Packet momentum per lattice spacing.
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
        k: f64,
        /// Packet width in lattice units.
        #[arg(long, default_value_t = 10.0)]
        sigma: f64,
        /// Constraint for the physics-informed rollout: orthogonal or symmetric.
        #[arg(long, default_value = "orthogonal")]
        constraint: String,
        /// Rollout length for the conservation checks.
        #[arg(long, default_value_t = 50)]
        rollout_steps: usize,
    },
    /// Generate a synthetic dataset (plus manifest and run config).
    GenSynth {
        /// One of: nodeclass, stg.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 0.1)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[arg(long, default_value_t = 6)]
        feature_dim: usize,
        #[arg(long, default_value_t = 0.6)]
        noise: f64,
        /// Signal length (stg only).
        #[arg(long, default_value_t = 120)]
        t_len: usize,
        #[arg(long, default_value_t = 4)]
        lags: usize,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
    },
    /// Finite-difference gradient verification on small random instances.
    GradCheck {
        /// Architecture to check: standard, conv_first, or both.
        #[arg(long, default_value = "both")]
        arch: String,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

/// Exit-code contract: 2 config/parse, 3 numerical failure, 4 divergence,
/// 5 lock contention.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse(_) | Error::Config(_) | Error::Contract(_) | Error::Io { .. } => 2,
        Error::Numerical(_) | Error::Degenerate(_) | Error::SamplingExhausted(_) => 3,
        Error::Divergence { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    match std::env::var("KOOPGRAPH_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => koopgraph::kernels::set_thread_cap(n),
            _ => {
                eprintln!("error: KOOPGRAPH_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => {}
    }

    let result = commands::dispatch(&cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Lock(path)) => {
            eprintln!("error: output directory is locked by another run: {}", path.display());
            ExitCode::from(5)
        }
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Lib(err)) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code_for(&err))
        }
    }
}
