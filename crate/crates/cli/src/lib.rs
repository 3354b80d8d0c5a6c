//! Command line driver: configuration, experiment orchestration and artifacts.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ReportToggles, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "branchquant", version, about = "Branched transport networks and N-point quantizers")]
pub struct Cli {
    /// Run configuration (JSON, or TOML by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured exponent.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Skip the solver in `sweep` and inject costs N^SLOPE.
    #[arg(long, global = true, value_name = "SLOPE", allow_hyphen_values = true)]
    pub debug_planted: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one branched transport instance from two measure files.
    SolveBot {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        sinks: PathBuf,
    },
    /// Solve the N-point quantization of the configured measure.
    Quantize {
        /// Number of sites (default: last entry of N_list).
        #[arg(long, short = 'n')]
        n: Option<usize>,
    },
    /// Warm-started sweep over N_list with all enabled reports.
    Sweep,
    /// Re-render the SVG of a dump.
    Render {
        dump: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check dumps against the structures they describe.
    Validate {
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
    },
}

/// Effective configuration after applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    Ok(cfg)
}

/// Runs one command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = resolve_config(cli)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::SolveBot { sources, sinks } => commands::solve_bot_cmd(&cfg, sources, sinks, &out),
        Command::Quantize { n } => commands::quantize_cmd(&cfg, *n, &out),
        Command::Sweep => commands::sweep_cmd(&cfg, cli.debug_planted, &out),
        Command::Render { dump, output } => commands::render_cmd(dump, output.as_deref()),
        Command::Validate { dumps } => commands::validate_cmd(dumps),
    }
}
