//! Command line surface: subcommands and shared flags.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

/// Mean field equation toolkit on flat tori with translation symmetry.
#[derive(Debug, Parser)]
#[command(
    name = "meanfield",
    version,
    about = "Green functions, variational solves, blow-up diagnostics, and \
             existence certificates for the mean field equation on flat tori",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Path to a TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides the config's output.dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Grid nodes per side; overrides the config's solver.grid.
    #[arg(long, global = true)]
    pub grid: Option<usize>,

    /// Subcriticality or concentration parameter; overrides solver.eps
    /// for solve and bubble, and selects a single row for testfn.
    #[arg(long, global = true)]
    pub eps: Option<f64>,

    /// Seed for randomized starts; overrides solver.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Tabular output format; overrides output.format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

/// Representation used for tabular outputs. Summaries, certificates,
/// and the manifest are always JSON; grid fields are always binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Comma-separated values with a header row.
    Csv,
    /// JSON array of row objects.
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the symmetrized Green function, its singularity-aware
    /// mean, and its local expansion.
    Green,
    /// Minimize the mean field functional at a fixed coupling.
    Solve,
    /// Warm-started minimization along a decreasing schedule of
    /// subcriticality parameters.
    Continue,
    /// Blow-up diagnostics of a minimized state: concentration scale,
    /// rescaled profile, and orbit mass fractions.
    Bubble,
    /// Evaluate the existence certificates for the critical coupling.
    Certify,
    /// Build the concentrating test-function family and tabulate its
    /// energies against the asymptotic prediction.
    Testfn,
    /// Print the closed-form kernel constants and bound chain.
    Constants,
}

impl Command {
    /// Stable name used in the manifest and error reports.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Green => "green",
            Command::Solve => "solve",
            Command::Continue => "continue",
            Command::Bubble => "bubble",
            Command::Certify => "certify",
            Command::Testfn => "testfn",
            Command::Constants => "constants",
        }
    }
}
