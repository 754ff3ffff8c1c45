//! `regional` — solve, verify, and cross-check regional optimal control
//! problems from the command line.

mod commands;
mod probfile;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "regional",
    version,
    about = "Solve and verify optimal control problems with region-dependent dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate trajectory structures, solve each, and report the optimum
    Solve {
        /// Problem file (TOML)
        problem: PathBuf,
        /// Largest number of arcs in an enumerated structure
        #[arg(long, default_value_t = 5)]
        max_arcs: usize,
        /// Control/clock nodes per arc
        #[arg(long, default_value_t = 20)]
        nodes: usize,
        /// Base seed for the multi-start initializations
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for report.json, solution.json, and CSVs
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a stored solution against the necessary optimality conditions
    Verify {
        /// Directory written by `solve`
        report_dir: PathBuf,
    },
    /// Solve the value function on a grid and compare with a stored run
    Hjb {
        /// Problem file (TOML); must be 2-D minimum time
        problem: PathBuf,
        /// Grid spacing
        #[arg(long)]
        h: f64,
        /// Grid rectangle: x1min,x1max,x2min,x2max
        #[arg(long, allow_hyphen_values = true)]
        domain: String,
        /// Target ball radius around xf
        #[arg(long)]
        radius: f64,
        /// Report directory to compare the grid value against
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Output directory for grid.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; anything else is a usage
            // parse failure and exits 1 (2 is reserved for infeasibility).
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => commands::EXIT_PARSE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve { problem, max_arcs, nodes, seed, out } => {
            commands::cmd_solve(&problem, max_arcs, nodes, seed, &out)
        }
        Command::Verify { report_dir } => commands::cmd_verify(&report_dir),
        Command::Hjb { problem, h, domain, radius, compare, out } => {
            commands::cmd_hjb(&problem, h, &domain, radius, compare.as_deref(), &out)
        }
    };
    ExitCode::from(code)
}
