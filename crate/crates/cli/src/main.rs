use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reflect_cli::commands::{
    cmd_analyze, cmd_forge, cmd_score, cmd_serve, cmd_synth, cmd_validate, AnalyzeArgs, ForgeArgs,
    ScoreArgs, ServeArgs, SynthArgs, ValidateArgs,
};
use reflect_cli::config::AppConfig;

/// Visual-grounding metrics, rollout rewards, and reasoning-data forging.
#[derive(Parser)]
#[command(name = "reflect", version, about)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct reasoning samples through LLM-VLM interaction.
    Forge(ForgeArgs),
    /// Score one rollout: accuracy, format, and visual-attention rewards.
    Score(ScoreArgs),
    /// Aggregate per-token metrics into decay curves (CSV out).
    Analyze(AnalyzeArgs),
    /// Generate synthetic trace fleets with known decay profiles.
    Synth(SynthArgs),
    /// Validate trace documents and print diagnostics.
    Validate(ValidateArgs),
    /// Run the reward HTTP service.
    Serve(ServeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match AppConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(err.exit_code());
        }
    };
    let result = match &cli.command {
        Command::Forge(args) => cmd_forge(args, &config),
        Command::Score(args) => cmd_score(args, &config),
        Command::Analyze(args) => cmd_analyze(args, &config),
        Command::Synth(args) => cmd_synth(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Serve(args) => cmd_serve(args, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
