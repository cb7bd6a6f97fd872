mod bundled;
mod commands;
mod reproduce;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decongest::mechanism::MechanismKind;

/// Equilibria, optima, sweeps, robustness and lottery checks for the
/// fixed-budget rebate and time-of-day pricing mechanisms.
#[derive(Debug, Parser)]
#[command(name = "decongest", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file, or the name of a bundled scenario (example1, example2, twoatom).
    #[arg(value_name = "SCENARIO")]
    pub scenario_pos: Option<String>,

    #[arg(long = "scenario", value_name = "PATH", conflicts_with = "scenario_pos")]
    pub scenario: Option<String>,

    /// Override a scenario key, e.g. `--set pricing.subscription=40`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Directory for CSV output; tables go to stdout when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

impl Common {
    pub fn scenario_arg(&self) -> Option<&str> {
        self.scenario.as_deref().or(self.scenario_pos.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct MechArgs {
    #[arg(long, value_parser = parse_kind, default_value = "none")]
    pub mech: MechanismKind,

    /// FBR budget ($); defaults to the optimal R*.
    #[arg(long = "R", value_name = "FLOAT")]
    pub budget: Option<f64>,

    /// TDP unit reward ($/Gbit); defaults to the optimal r*.
    #[arg(long = "r", value_name = "FLOAT")]
    pub rate: Option<f64>,
}

fn parse_kind(s: &str) -> Result<MechanismKind, String> {
    s.parse().map_err(|e: decongest::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equilibrium under one mechanism.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mech: MechArgs,
    },
    /// Social optimum, optimal parameters, and their implementation check.
    Optimum {
        #[command(flatten)]
        common: Common,
    },
    /// Equilibria over a grid of FBR budgets or TDP rates.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_kind, default_value = "fbr")]
        mech: MechanismKind,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long, value_name = "SPEC")]
        grid: String,
        /// Read grid values as multiples of the optimal parameter.
        #[arg(long)]
        relative: bool,
    },
    /// Perturbed-cost comparison of FBR(R*) and TDP(r*).
    Robustness {
        #[command(flatten)]
        common: Common,
        /// `start:stop:step` or a comma-separated list of epsilons.
        #[arg(long, value_name = "SPEC", default_value = "-0.5:0.5:0.1")]
        eps: String,
        /// `scale` (p = c) or `linear:<slope>`.
        #[arg(long, default_value = "scale")]
        direction: String,
    },
    /// Monte Carlo raffle implementation of FBR.
    Lottery {
        #[command(flatten)]
        common: Common,
        /// Prize ($); defaults to R*.
        #[arg(long = "R", value_name = "FLOAT")]
        budget: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        users: usize,
        #[arg(long, default_value_t = 100_000)]
        rounds: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.997)]
        coverage: f64,
    },
    /// Regenerate the data behind a published table or figure.
    Reproduce {
        #[arg(value_enum)]
        target: reproduce::Target,
        /// Use this scenario instead of the bundled ones.
        #[arg(long, value_name = "PATH")]
        scenario: Option<String>,
        /// Tolerance file; the bundled one by default.
        #[arg(long, value_name = "PATH")]
        expectations: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

/// Exit codes.
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_AUDIT: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;

/// Raised when reproduced cells fall outside their tolerances.
#[derive(Debug)]
pub struct ToleranceFailure(pub String);

impl std::fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "reproduction outside tolerance: {}", self.0)
    }
}

impl std::error::Error for ToleranceFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ToleranceFailure>().is_some() {
            return EXIT_TOLERANCE;
        }
        if let Some(decongest::Error::Audit(_)) = cause.downcast_ref::<decongest::Error>() {
            return EXIT_AUDIT;
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
