//! `reflect score`: reward breakdown for one rollout.

use std::path::PathBuf;

use clap::Args;

use reflect_core::reward::{score_rollout, RewardError};
use reflect_core::trace::read_trace;
use reflect_core::AttentionTrace64;

use crate::config::AppConfig;
use crate::AppError;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Attention-trace JSON document for the rollout.
    #[arg(long, value_name = "PATH")]
    pub trace: PathBuf,
    /// File holding the model's response text.
    #[arg(long, value_name = "PATH")]
    pub response: PathBuf,
    /// Ground-truth answer string.
    #[arg(long, value_name = "STR")]
    pub answer: String,
    /// Override the configured accuracy-term weight for the visual reward.
    #[arg(long, value_name = "FLOAT")]
    pub lambda_v: Option<f64>,
    /// Override the configured format-term weight.
    #[arg(long, value_name = "FLOAT")]
    pub lambda_f: Option<f64>,
}

pub fn cmd_score(args: &ScoreArgs, config: &AppConfig) -> Result<(), AppError> {
    let breakdown = score_files(args, config)?;
    println!("{breakdown}");
    Ok(())
}

/// Computes the single-line JSON breakdown; shared with tests so the CLI and
/// service outputs can be compared byte for byte.
pub fn score_files(args: &ScoreArgs, config: &AppConfig) -> Result<String, AppError> {
    let file = std::fs::File::open(&args.trace)
        .map_err(|e| AppError::Usage(format!("cannot open trace {}: {e}", args.trace.display())))?;
    let trace: AttentionTrace64 = read_trace(file)
        .map_err(|e| AppError::Usage(format!("invalid trace {}: {e}", args.trace.display())))?;
    let response = std::fs::read_to_string(&args.response).map_err(|e| {
        AppError::Usage(format!("cannot read response {}: {e}", args.response.display()))
    })?;
    let mut reward_config = config.reward.reward_config();
    if let Some(lambda_v) = args.lambda_v {
        reward_config.lambda_v = lambda_v;
    }
    if let Some(lambda_f) = args.lambda_f {
        reward_config.lambda_f = lambda_f;
    }
    let breakdown = score_rollout(&response, &args.answer, &trace, &reward_config).map_err(
        |err| match err {
            RewardError::DegenerateAttention | RewardError::DegenerateHalf { .. } => {
                AppError::Degenerate(format!("{}: {err}", err.kind()))
            }
            RewardError::InvalidInput(_) => AppError::Usage(err.to_string()),
        },
    )?;
    Ok(serde_json::to_string(&breakdown).expect("breakdown always serializes"))
}
