//! `reflect forge`: batch reasoning-data construction.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;

use reflect_forge::batch::{forge_batch, BatchOptions, ClientProvider, ScriptBook, SharedClients};
use reflect_forge::pipeline::{ForgeClients, ForgeConfig, ForgeTask};

use crate::config::AppConfig;
use crate::AppError;

#[derive(Debug, Args)]
pub struct ForgeArgs {
    /// Task list: JSON Lines of {"question", "image", "answer"}.
    #[arg(long, value_name = "PATH")]
    pub tasks: PathBuf,
    /// Output JSONL path; configured default when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Scripted transcripts (JSON); runs fully offline and deterministic.
    #[arg(long, value_name = "PATH")]
    pub mock_transcript: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    /// Reject stitched reasoning without a connective phrase.
    #[arg(long)]
    pub require_connectors: bool,
    /// Fixed provenance timestamp (defaults to "0" under --mock-transcript).
    #[arg(long)]
    pub timestamp: Option<String>,
}

pub fn load_tasks(path: &PathBuf) -> Result<Vec<ForgeTask>, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Usage(format!("cannot read tasks {}: {e}", path.display())))?;
    let mut tasks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: ForgeTask = serde_json::from_str(line).map_err(|e| {
            AppError::Usage(format!("bad task on line {}: {e}", lineno + 1))
        })?;
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn cmd_forge(args: &ForgeArgs, config: &AppConfig) -> Result<(), AppError> {
    let tasks = load_tasks(&args.tasks)?;

    let forge_config = ForgeConfig {
        max_rounds: args.max_rounds.unwrap_or(config.forge.max_rounds),
        temperatures: config.forge.temperatures,
        max_tokens: config.forge.max_tokens,
        require_connectors: args.require_connectors || config.forge.require_connectors,
        timestamp: args
            .timestamp
            .clone()
            .or_else(|| args.mock_transcript.is_some().then(|| "0".to_string())),
        ..ForgeConfig::default()
    };
    forge_config.validate().map_err(AppError::Usage)?;

    let provider: Box<dyn ClientProvider> = match &args.mock_transcript {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                AppError::Usage(format!("cannot read transcript {}: {e}", path.display()))
            })?;
            let book: ScriptBook = serde_json::from_str(&text).map_err(|e| {
                AppError::Usage(format!("bad transcript {}: {e}", path.display()))
            })?;
            if book.tasks.len() != tasks.len() {
                return Err(AppError::Usage(format!(
                    "transcript covers {} tasks but {} were given",
                    book.tasks.len(),
                    tasks.len()
                )));
            }
            Box::new(book)
        }
        None => {
            let llm = config
                .llm_endpoint()
                .connect()
                .map_err(|e| AppError::Usage(e.to_string()))?;
            let vlm = config
                .vlm_endpoint()
                .connect()
                .map_err(|e| AppError::Usage(e.to_string()))?;
            Box::new(SharedClients(ForgeClients {
                llm: Arc::new(llm),
                vlm: Arc::new(vlm),
                llm_model: config.llm.model.clone(),
                vlm_model: config.vlm.model.clone(),
            }))
        }
    };

    let options = BatchOptions {
        concurrency: args.concurrency.unwrap_or(config.forge.concurrency),
        output_path: args
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&config.forge.output)),
    };

    let runtime = super::runtime()?;
    let report = runtime
        .block_on(forge_batch(&tasks, provider.as_ref(), &forge_config, &options))
        .map_err(|e| AppError::Internal(e.to_string()))?;

    println!(
        "{}",
        serde_json::to_string(&report).expect("report always serializes")
    );
    if report.transport_aborts() > 0 {
        return Err(AppError::Transport(format!(
            "{} task(s) aborted on transport failures",
            report.transport_aborts()
        )));
    }
    Ok(())
}
