//! `valence`: validate scenarios, solve fronts, play and assess episodes,
//! analyse protocols and run the session service.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "valence", version, about = "Value-aligned decision training engine")]
struct Cli {
    /// Output style; `json` prints one document on stdout and errors as
    /// JSON lines on stderr.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a scenario file.
    Validate {
        /// Scenario file, or the name of a shipped scenario.
        scenario: String,
    },
    /// Compute the Pareto front of a scenario.
    Solve(SolveArgs),
    /// Run an episode, interactively or from a script.
    Play(PlayArgs),
    /// Score a trajectory and compare it with the front.
    Assess(AssessArgs),
    /// Evaluate or compare protocols.
    #[command(subcommand)]
    Protocol(ProtocolCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Discount factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Number of decision steps.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub horizon: u32,
    /// Iterate to convergence instead of a fixed horizon (needs gamma < 1).
    #[arg(long, conflicts_with = "horizon")]
    pub converge: bool,
    /// Cap on vectors kept per state, 0 for none. Defaults to exact for
    /// deterministic scenarios and a small cap for stochastic ones.
    #[arg(long)]
    pub max_vectors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: String,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Where to write the `.front.json` file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File with one action name per line.
    #[arg(long, conflicts_with = "actions")]
    pub script: Option<PathBuf>,
    /// Comma-separated action names.
    #[arg(long, value_delimiter = ',')]
    pub actions: Option<Vec<String>>,
    /// Show alignment scores after every step.
    #[arg(long)]
    pub reveal: bool,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub horizon: u32,
    /// Trajectory file to write; defaults to `<scenario>-seed<seed>.traj.jsonl`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    pub scenario: String,
    pub trajectory: PathBuf,
    /// Previously solved `.front.json`; solved on the fly when absent.
    #[arg(long)]
    pub front: Option<PathBuf>,
    /// Preference weights, one per value, e.g. `1,0`.
    #[arg(long)]
    pub weights: Option<String>,
    /// Report file; defaults to the trajectory path with `.report.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ProtocolCommand {
    /// Solve the scenario under one protocol.
    Eval {
        scenario: String,
        protocol: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Solve under two protocols and put them side by side.
    Compare {
        scenario: String,
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VALENCE_PORT", default_value_t = valence_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = "VALENCE_DATA_DIR", default_value = valence_service::DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = output::Output::new(cli.format);
    let result = match cli.command {
        Command::Validate { scenario } => commands::validate(&out, &scenario),
        Command::Solve(args) => commands::solve(&out, &args),
        Command::Play(args) => commands::play(&out, &args),
        Command::Assess(args) => commands::assess(&out, &args),
        Command::Protocol(cmd) => commands::protocol(&out, &cmd),
        Command::Serve(args) => commands::serve(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => out.fail(failure),
    }
}
