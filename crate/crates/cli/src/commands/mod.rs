//! Subcommand implementations. Each returns `Ok(())` or an [`AppError`]
//! carrying the exit class; machine-readable results print to stdout.

mod analyze;
mod forge;
mod score;
mod serve;
mod synth;
mod validate;

pub use analyze::{cmd_analyze, AnalyzeArgs};
pub use forge::{cmd_forge, ForgeArgs};
pub use score::{cmd_score, score_files, ScoreArgs};
pub use serve::{cmd_serve, ServeArgs};
pub use synth::{cmd_synth, SynthArgs};
pub use validate::{cmd_validate, ValidateArgs};

use crate::AppError;

pub(crate) fn runtime() -> Result<tokio::runtime::Runtime, AppError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::Internal(format!("tokio runtime: {e}")))
}
