//! Command-line front end for the ring tower and its connection, geodesic,
//! and overconvergence solvers.
//!
//! Every subcommand reads one JSON configuration file (`--config`) holding
//! a `ring` block and a command-specific `problem` block, runs the exact
//! computation, and emits a JSON report to `--out` (or stdout). Reports
//! are deterministic: rerunning the same configuration reproduces the
//! same bytes. Exit codes: 0 when every checked identity holds, 1 when an
//! identity fails (the report still describes the failure), 2 when the
//! configuration or input data is invalid.

mod commands;
mod wire;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, RunOpts};
use wire::{CliResult, ConfigFile, Ring};

#[derive(Parser)]
#[command(
    name = "pigeom",
    version,
    about = "Exact arithmetic for Frobenius lifts, derivations, connections, and geodesics over truncated local rings"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file with `ring` and `problem` blocks.
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the command's default solve/check depth (ring digits).
    #[arg(long)]
    depth: Option<u32>,
    /// Seed for randomized suites (fallback: PIGEOM_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent randomized sub-checks.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve and print the ring tower (modulus, generator, twists).
    RingInfo(CommonArgs),
    /// Randomized verification of the derivation laws and digit formulas.
    DerivationCheck(CommonArgs),
    /// Solve the metric-plus-torsion connection problem and verify it.
    LeviCivita(CommonArgs),
    /// Solve the square-root connection problem and verify it.
    Chern(CommonArgs),
    /// Shoot a geodesic from tangent data and verify both defect forms.
    Geodesic(CommonArgs),
    /// Transport a frame along a curve and verify the transport defect.
    ParallelTransport(CommonArgs),
    /// Evaluate the residue-level exponential map.
    ExpMap(CommonArgs),
    /// Solve a twisted polynomial system from residue data and read it off.
    TransMap(CommonArgs),
    /// Coordinate decomposition of a base-ring element, with ghost checks.
    WittCoords(CommonArgs),
    /// Randomized verification of the jet-group laws.
    JetGroupCheck(CommonArgs),
    /// Compare connection coefficients across ramification indices.
    Overconvergence(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::RingInfo(a)
            | Command::DerivationCheck(a)
            | Command::LeviCivita(a)
            | Command::Chern(a)
            | Command::Geodesic(a)
            | Command::ParallelTransport(a)
            | Command::ExpMap(a)
            | Command::TransMap(a)
            | Command::WittCoords(a)
            | Command::JetGroupCheck(a)
            | Command::Overconvergence(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::RingInfo(_) => "ring-info",
            Command::DerivationCheck(_) => "derivation-check",
            Command::LeviCivita(_) => "levi-civita",
            Command::Chern(_) => "chern",
            Command::Geodesic(_) => "geodesic",
            Command::ParallelTransport(_) => "parallel-transport",
            Command::ExpMap(_) => "exp-map",
            Command::TransMap(_) => "trans-map",
            Command::WittCoords(_) => "witt-coords",
            Command::JetGroupCheck(_) => "jet-group-check",
            Command::Overconvergence(_) => "overconvergence",
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("PIGEOM_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("PIGEOM_SEED must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn run(cmd: &Command) -> CliResult<Outcome> {
    let args = cmd.common();
    if args.jobs == 0 {
        return Err("--jobs must be >= 1".into());
    }
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let cfg: ConfigFile = serde_json::from_str(&raw)
        .map_err(|e| format!("cannot parse {}: {e}", args.config.display()))?;
    let ring = Ring::build(&cfg.ring)?;
    let opts = RunOpts {
        depth: args.depth,
        seed: resolve_seed(args.seed)?,
        jobs: args.jobs,
    };
    match cmd {
        Command::RingInfo(_) => commands::ring_info(&ring),
        Command::DerivationCheck(_) => commands::derivation_check(&ring, &cfg.problem, &opts),
        Command::LeviCivita(_) => commands::levi_civita_cmd(&ring, &cfg.problem, &opts),
        Command::Chern(_) => commands::chern_cmd(&ring, &cfg.problem, &opts),
        Command::Geodesic(_) => commands::geodesic_cmd(&ring, &cfg.problem, &opts),
        Command::ParallelTransport(_) => {
            commands::parallel_transport_cmd(&ring, &cfg.problem, &opts)
        }
        Command::ExpMap(_) => commands::exp_map_cmd(&ring, &cfg.problem, &opts),
        Command::TransMap(_) => commands::trans_map_cmd(&ring, &cfg.problem, &opts),
        Command::WittCoords(_) => commands::witt_coords_cmd(&ring, &cfg.problem, &opts),
        Command::JetGroupCheck(_) => commands::jet_group_check(&ring, &cfg.problem, &opts),
        Command::Overconvergence(_) => commands::overconvergence_cmd(&ring, &cfg.problem, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.cmd.name();
    match run(&cli.cmd) {
        Ok(outcome) => {
            let mut text =
                serde_json::to_string_pretty(&outcome.report).expect("report serialization");
            text.push('\n');
            let args = cli.cmd.common();
            if let Some(path) = &args.out {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("pigeom: {name}: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            } else {
                print!("{text}");
            }
            if outcome.pass {
                eprintln!("pigeom: {name}: all checks passed");
                ExitCode::SUCCESS
            } else {
                eprintln!("pigeom: {name}: identity check failed (see report)");
                ExitCode::from(1)
            }
        }
        Err(message) => {
            eprintln!("pigeom: {name}: configuration error: {message}");
            ExitCode::from(2)
        }
    }
}
