//! Batch driver: forges a list of tasks under bounded concurrency, appends
//! surviving samples as JSON Lines, and tallies rejections by reason.
//!
//! Each task's outcome depends only on its own clients and transcript, so
//! the persisted sample set is identical whatever the concurrency level.
//! Samples are written in task order after all tasks settle; an I/O failure
//! aborts the batch and leaves a `<output>.partial` marker file next to the
//! output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use reflect_core::trace::ReasoningSample;

use crate::gateway::{mock_script, GatewayError, ScriptEntry};
use crate::pipeline::{ForgeClients, ForgeConfig, ForgeOutcome, ForgePipeline, ForgeTask};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no clients for task {index}: {source}")]
    Clients {
        index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("task panicked: {0}")]
    Join(String),
}

/// Supplies the clients each task runs against. Live runs share two
/// endpoints; scripted runs hand every task its own transcript so outcomes
/// stay independent of scheduling order.
pub trait ClientProvider: Send + Sync {
    fn clients_for(&self, task_index: usize) -> Result<ForgeClients, GatewayError>;
}

/// Shares the same two endpoints across all tasks.
pub struct SharedClients(pub ForgeClients);

impl ClientProvider for SharedClients {
    fn clients_for(&self, _task_index: usize) -> Result<ForgeClients, GatewayError> {
        Ok(self.0.clone())
    }
}

/// Per-task scripted transcripts for offline, deterministic runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaskScript {
    pub llm: Vec<ScriptLine>,
    pub vlm: Vec<ScriptLine>,
}

/// Wire form of one script entry; `{"reply": "..."}` or `{"fail": true}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptLine {
    Reply { reply: String },
    Fail { fail: bool },
}

impl From<&ScriptLine> for ScriptEntry {
    fn from(line: &ScriptLine) -> Self {
        match line {
            ScriptLine::Reply { reply } => ScriptEntry::Reply(reply.clone()),
            ScriptLine::Fail { .. } => ScriptEntry::Fail,
        }
    }
}

/// A transcript book: one [`TaskScript`] per task, in task order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptBook {
    pub tasks: Vec<TaskScript>,
    #[serde(default = "default_mock_model")]
    pub llm_model: String,
    #[serde(default = "default_mock_model")]
    pub vlm_model: String,
}

fn default_mock_model() -> String {
    "scripted".into()
}

impl ClientProvider for ScriptBook {
    fn clients_for(&self, task_index: usize) -> Result<ForgeClients, GatewayError> {
        let script = self.tasks.get(task_index).ok_or_else(|| {
            GatewayError::InvalidRequest(format!("no transcript for task {task_index}"))
        })?;
        Ok(ForgeClients {
            llm: Arc::new(mock_script(script.llm.iter().map(Into::into).collect())),
            vlm: Arc::new(mock_script(script.vlm.iter().map(Into::into).collect())),
            llm_model: self.llm_model.clone(),
            vlm_model: self.vlm_model.clone(),
        })
    }
}

/// Batch summary: written samples plus the rejection tally by reason. The
/// tally keys are stable snake_case reason names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub written: usize,
    pub rejections: BTreeMap<String, usize>,
}

impl BatchReport {
    pub fn total(&self) -> usize {
        self.written + self.rejections.values().sum::<usize>()
    }

    pub fn transport_aborts(&self) -> usize {
        self.rejections.get("transport").copied().unwrap_or(0)
    }
}

/// Batch concurrency settings.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub concurrency: usize,
    pub output_path: PathBuf,
}

/// Forges every task and appends surviving samples to the output file.
pub async fn forge_batch(
    tasks: &[ForgeTask],
    provider: &dyn ClientProvider,
    config: &ForgeConfig,
    options: &BatchOptions,
) -> Result<BatchReport, ForgeError> {
    let limiter = Arc::new(Semaphore::new(options.concurrency.max(1)));
    let config = Arc::new(config.clone());
    let mut join_set: JoinSet<(usize, ForgeOutcome)> = JoinSet::new();

    for (index, task) in tasks.iter().enumerate() {
        let clients = provider
            .clients_for(index)
            .map_err(|source| ForgeError::Clients { index, source })?;
        let task = task.clone();
        let config = Arc::clone(&config);
        let limiter = Arc::clone(&limiter);
        join_set.spawn(async move {
            let _permit = limiter.acquire().await.expect("limiter never closes");
            let pipeline = ForgePipeline::new(&clients, &config);
            (index, pipeline.forge_sample(&task).await)
        });
    }

    let mut outcomes: Vec<Option<ForgeOutcome>> = vec![None; tasks.len()];
    while let Some(joined) = join_set.join_next().await {
        let (index, outcome) = joined.map_err(|e| ForgeError::Join(e.to_string()))?;
        outcomes[index] = Some(outcome);
    }

    let mut report = BatchReport::default();
    let mut samples: Vec<ReasoningSample> = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            ForgeOutcome::Sample(sample) => {
                report.written += 1;
                samples.push(*sample);
            }
            ForgeOutcome::Rejected(reason) => {
                *report.rejections.entry(reason.key().to_string()).or_insert(0) += 1;
            }
        }
    }

    if let Err(source) = append_samples(&options.output_path, &samples) {
        write_partial_marker(&options.output_path, &source);
        return Err(ForgeError::Io {
            path: options.output_path.clone(),
            source,
        });
    }
    Ok(report)
}

fn append_samples(path: &Path, samples: &[ReasoningSample]) -> Result<(), std::io::Error> {
    if samples.is_empty() {
        return Ok(());
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for sample in samples {
        let line = serde_json::to_string(sample)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    file.flush()
}

fn write_partial_marker(path: &Path, error: &std::io::Error) {
    let marker = marker_path(path);
    let _ = std::fs::write(
        &marker,
        format!("batch aborted mid-write: {error}\noutput may be incomplete\n"),
    );
}

/// `<output>.partial`, written when a batch aborts mid-write.
pub fn marker_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    output.with_file_name(name)
}
