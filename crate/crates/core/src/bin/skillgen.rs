use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use skillgen::config::PipelineConfig;
use skillgen::pipeline::{run_stage, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Sample,
    BuildGraph,
    Credit,
    Skills,
    Eval,
    Report,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Sample => Stage::Sample,
            Command::BuildGraph => Stage::BuildGraph,
            Command::Credit => Stage::Credit,
            Command::Skills => Stage::Skills,
            Command::Eval => Stage::Eval,
            Command::Report => Stage::Report,
        }
    }
}

/// Mine credit-weighted skills from agent trajectories and evaluate
/// skill-prompted agents.
#[derive(Debug, Parser)]
#[command(name = "skillgen", version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for this stage's outputs; defaults to the work directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the provider and TD seeds.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let mut cfg = match PipelineConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match run_stage(cli.command.into(), &cfg, cli.out.as_deref()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
