//! `covillm`: batch entry points for the assembly workbench.
//!
//! Exit status is 0 on success, 1 when a pipeline stage fails and 2 for
//! usage or configuration problems.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use covillm_core::planner::PlanMode;

#[derive(Debug, Parser)]
#[command(
    name = "covillm",
    version,
    about = "Collaborative vision + language assembly workbench"
)]
pub struct Cli {
    /// Service/workbench configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a benchmark scene bundle: scene.json, frame.cvlm, frame.pgm,
    /// classification.txt and instruction.txt.
    GenScene {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        level: u8,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        product: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline in-process and execute the plan.
    Run {
        /// A scene.json (synthesized with --seed) or a .cvlm frame file.
        #[arg(long)]
        scene: PathBuf,
        /// Operator statements, one per line.
        #[arg(long)]
        classification: PathBuf,
        #[arg(
            long,
            conflicts_with = "instruction_file",
            required_unless_present = "instruction_file"
        )]
        instruction: Option<String>,
        #[arg(long)]
        instruction_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
        mode: Mode,
        /// Also write the event log as JSON lines.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Score planner backends against the deterministic reference.
    Eval {
        #[arg(long, value_enum, default_value_t = EvalBackendArg::OracleMock)]
        backend: EvalBackendArg,
        /// Independent attempts per product.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
    },
    /// Emit chat-format fine-tuning records as JSON lines.
    GenFinetune {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Camera heights at which each component category stays detectable.
    HeightRange {
        /// JSON array of footprint specs; the task board's parts by default.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the minimum blob area in pixels.
        #[arg(long)]
        area_min: Option<usize>,
    },
    /// Start the HTTP service.
    Serve,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Deterministic,
    Llm,
}

impl From<Mode> for PlanMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Deterministic => PlanMode::Deterministic,
            Mode::Llm => PlanMode::Llm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalBackendArg {
    OracleMock,
    GarbageMock,
    /// The configured chat-completions endpoint.
    Live,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
