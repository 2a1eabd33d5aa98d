//! Three-role interaction that constructs reasoning samples with
//! visual-reflection patterns.
//!
//! Per round: the requester (LLM) decides what visual information is needed
//! and asks for it; the responder (VLM) describes the relevant part of the
//! image; the summarizer (LLM) attempts a final answer from the accumulated
//! context. A summarizer answer that misses the ground truth is discarded
//! wholesale and a new round begins. A hit on round 1 is rejected outright:
//! such samples never re-consulted the image and carry no reflection
//! pattern. Surviving contexts go through a cohesion rewrite that stitches
//! the fragments into one reasoning chain, re-verified against the ground
//! truth before the sample is persisted.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use reflect_core::reward::{extract_boxed, normalize_answer};
use reflect_core::trace::{Provenance, ReasoningSample, TranscriptMessage, TranscriptRole};

use crate::gateway::{ChatClient, ChatMessage, ChatRequest, GatewayError};
use crate::parse::{parse_cohesion_reply, parse_requester_reply, parse_summarizer_reply};
use crate::prompts::{
    render_cohesion, render_requester, render_responder, render_summarizer, CONNECTIVE_PHRASES,
    CONTEXT_GAP_MARKER, PARSE_REMINDER,
};

/// Where a context entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextSource {
    RequesterThought,
    ResponderDescription,
    SummarizerOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    pub source: ContextSource,
    pub text: String,
}

/// Append-only reasoning context. Summarizer output from failed rounds is
/// never pushed, so it cannot leak into later prompts or persisted samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReasoningContext {
    entries: Vec<ContextEntry>,
}

impl ReasoningContext {
    pub fn push(&mut self, source: ContextSource, text: impl Into<String>) {
        self.entries.push(ContextEntry {
            source,
            text: text.into(),
        });
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn labeled(entry: &ContextEntry) -> String {
        match entry.source {
            ContextSource::RequesterThought => format!("Analysis: {}", entry.text),
            ContextSource::ResponderDescription => format!("Visual information: {}", entry.text),
            ContextSource::SummarizerOutput => format!("Summary: {}", entry.text),
        }
    }

    /// Serialization handed to the `<info>` placeholder.
    pub fn render_info(&self) -> String {
        self.entries
            .iter()
            .map(Self::labeled)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Serialization handed to the cohesion rewrite: fragments joined by the
    /// gap marker the rewrite prompt describes.
    pub fn render_gapped(&self) -> String {
        self.entries
            .iter()
            .map(Self::labeled)
            .collect::<Vec<_>>()
            .join(&format!("\n{CONTEXT_GAP_MARKER}\n"))
    }
}

/// Per-role sampling temperatures: description should be low-variance while
/// reasoning benefits from diversity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleTemperatures {
    pub requester: f64,
    pub responder: f64,
    pub summarizer: f64,
}

impl Default for RoleTemperatures {
    fn default() -> Self {
        RoleTemperatures {
            requester: 0.7,
            responder: 0.2,
            summarizer: 0.7,
        }
    }
}

/// Answer-match rule applied at every verification point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatch {
    /// Trim, case-fold, strip one trailing period; the same normalization
    /// the reward engine uses for the accuracy reward.
    #[default]
    Normalized,
}

impl AnswerMatch {
    pub fn matches(&self, candidate: &str, ground_truth: &str) -> bool {
        match self {
            AnswerMatch::Normalized => {
                let gt = normalize_answer(ground_truth);
                !gt.is_empty() && normalize_answer(candidate) == gt
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForgeConfig {
    /// Interaction rounds before giving up; at least 2, since a one-round
    /// success is filtered as non-reflective anyway.
    pub max_rounds: u32,
    pub answer_match: AnswerMatch,
    pub temperatures: RoleTemperatures,
    pub max_tokens: u32,
    /// Require a connective phrase in the stitched reasoning.
    pub require_connectors: bool,
    /// Fixed provenance timestamp for reproducible runs; wall clock if unset.
    pub timestamp: Option<String>,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            max_rounds: 4,
            answer_match: AnswerMatch::Normalized,
            temperatures: RoleTemperatures::default(),
            max_tokens: 2048,
            require_connectors: false,
            timestamp: None,
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds < 2 {
            return Err("max_rounds must be >= 2".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be >= 1".into());
        }
        Ok(())
    }
}

/// The two endpoints plus their model identifiers.
#[derive(Clone)]
pub struct ForgeClients {
    pub llm: Arc<dyn ChatClient>,
    pub vlm: Arc<dyn ChatClient>,
    pub llm_model: String,
    pub vlm_model: String,
}

/// One input task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeTask {
    pub question: String,
    pub image: String,
    pub answer: String,
}

/// Why a task produced no sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    /// Correct on round 1: no visual reflection to learn from.
    NonReflection,
    /// No answer match within `max_rounds`.
    BudgetExhausted,
    /// A gateway transport failure aborted the task.
    Transport,
    /// The cohesion rewrite changed the final answer.
    CohesionDrift,
    /// The cohesion reply could not be parsed even after a reprompt.
    CohesionParse,
    /// Strict mode: stitched reasoning lacks a connective phrase.
    MissingConnector,
}

impl RejectReason {
    pub fn key(&self) -> &'static str {
        match self {
            RejectReason::NonReflection => "non_reflection",
            RejectReason::BudgetExhausted => "budget_exhausted",
            RejectReason::Transport => "transport",
            RejectReason::CohesionDrift => "cohesion_drift",
            RejectReason::CohesionParse => "cohesion_parse",
            RejectReason::MissingConnector => "missing_connector",
        }
    }
}

/// Outcome of forging one task.
#[derive(Debug, Clone, PartialEq)]
pub enum ForgeOutcome {
    Sample(Box<ReasoningSample>),
    Rejected(RejectReason),
}

/// Step-level failure: a round error consumes the round, a transport error
/// aborts the task.
#[derive(Debug)]
pub enum StepError {
    Round(String),
    Transport(GatewayError),
}

fn classify(err: GatewayError) -> StepError {
    match err {
        GatewayError::EmptyCompletion => StepError::Round("empty completion".into()),
        other => StepError::Transport(other),
    }
}

pub struct ForgePipeline<'a> {
    pub clients: &'a ForgeClients,
    pub config: &'a ForgeConfig,
}

impl<'a> ForgePipeline<'a> {
    pub fn new(clients: &'a ForgeClients, config: &'a ForgeConfig) -> Self {
        ForgePipeline { clients, config }
    }

    fn llm_request(&self, prompt: String, temperature: f64) -> ChatRequest {
        ChatRequest {
            model: self.clients.llm_model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    /// One call plus one reprompt with a parse reminder; the parsed value
    /// and the raw reply text come back together.
    async fn call_parsed<T>(
        &self,
        client: &Arc<dyn ChatClient>,
        request: ChatRequest,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(T, String), StepError> {
        let reply = client.complete(&request).await.map_err(classify)?;
        if let Some(parsed) = parse(&reply.text) {
            return Ok((parsed, reply.text));
        }
        let mut retry = request;
        let original = retry.messages[0].text.clone();
        retry.messages[0].text = format!("{original}\n\n{PARSE_REMINDER}");
        let reply = client.complete(&retry).await.map_err(classify)?;
        match parse(&reply.text) {
            Some(parsed) => Ok((parsed, reply.text)),
            None => Err(StepError::Round("unparseable reply after reprompt".into())),
        }
    }

    /// Requester turn: asks the LLM what visual information is needed. The
    /// thought lands in the context; the visual question goes to the
    /// responder.
    pub async fn request_visual(
        &self,
        context: &mut ReasoningContext,
        question: &str,
    ) -> Result<(String, String, String), StepError> {
        let prompt = render_requester(question, &context.render_info());
        let request = self.llm_request(prompt, self.config.temperatures.requester);
        let ((thought, visual_question), raw) = self
            .call_parsed(&self.clients.llm, request, parse_requester_reply)
            .await?;
        context.push(ContextSource::RequesterThought, thought.clone());
        Ok((thought, visual_question, raw))
    }

    /// Responder turn: the VLM answers the visual question against the
    /// image; the description lands in the context.
    pub async fn respond_visual(
        &self,
        context: &mut ReasoningContext,
        visual_question: &str,
        image_ref: &str,
    ) -> Result<String, StepError> {
        let prompt = render_responder(visual_question);
        let request = ChatRequest {
            model: self.clients.vlm_model.clone(),
            messages: vec![ChatMessage::user_with_image(prompt, image_ref)],
            temperature: self.config.temperatures.responder,
            max_tokens: self.config.max_tokens,
        };
        let reply = self
            .clients
            .vlm
            .complete(&request)
            .await
            .map_err(classify)?;
        let description = reply.text.trim().to_string();
        if description.is_empty() {
            return Err(StepError::Round("empty visual description".into()));
        }
        context.push(ContextSource::ResponderDescription, description.clone());
        Ok(description)
    }

    /// Summarizer turn. The output is NOT pushed into the context here: the
    /// caller appends it only when the answer matches the ground truth, and
    /// discards it otherwise.
    pub async fn summarize(
        &self,
        context: &ReasoningContext,
        question: &str,
    ) -> Result<(String, String, String), StepError> {
        let prompt = render_summarizer(&context.render_info(), question);
        let request = self.llm_request(prompt, self.config.temperatures.summarizer);
        let ((thought, final_answer), raw) = self
            .call_parsed(&self.clients.llm, request, parse_summarizer_reply)
            .await?;
        Ok((thought, final_answer, raw))
    }

    /// Rewrites the accepted context into one cohesive reasoning chain and
    /// re-verifies the boxed answer against the ground truth.
    pub async fn enhance_cohesion(
        &self,
        context: &ReasoningContext,
        question: &str,
        ground_truth: &str,
    ) -> Result<CohesionResult, CohesionFailure> {
        let prompt = render_cohesion(question, &context.render_gapped());
        let request = self.llm_request(prompt, self.config.temperatures.summarizer);
        let parse = |text: &str| {
            let (thought, final_answer) = parse_cohesion_reply(text)?;
            // The boxed span usually lives in the Final answer field; fall
            // back to the thought for models that inline it.
            let boxed = extract_boxed(&final_answer)
                .or_else(|| extract_boxed(&thought))?
                .to_string();
            Some((thought, final_answer, boxed))
        };
        let ((thought, final_answer, boxed), raw) = self
            .call_parsed(&self.clients.llm, request, parse)
            .await
            .map_err(|err| match err {
                StepError::Round(_) => CohesionFailure::Parse,
                StepError::Transport(e) => CohesionFailure::Transport(e),
            })?;
        if !self.config.answer_match.matches(&boxed, ground_truth) {
            return Err(CohesionFailure::Drift);
        }
        let reasoning = if thought.contains("\\boxed{") {
            thought
        } else {
            format!("{thought}\n{final_answer}")
        };
        if self.config.require_connectors
            && !CONNECTIVE_PHRASES.iter().any(|p| reasoning.contains(p))
        {
            return Err(CohesionFailure::MissingConnector);
        }
        Ok(CohesionResult {
            reasoning,
            boxed_answer: boxed,
            raw_reply: raw,
        })
    }

    /// Runs the full loop for one task.
    pub async fn forge_sample(&self, task: &ForgeTask) -> ForgeOutcome {
        debug_assert!(self.config.validate().is_ok());
        let mut context = ReasoningContext::default();
        let mut transcript: Vec<TranscriptMessage> = Vec::new();

        for round in 1..=self.config.max_rounds {
            let round_result = self
                .run_round(task, &mut context, &mut transcript)
                .await;
            match round_result {
                Err(StepError::Transport(_)) => {
                    return ForgeOutcome::Rejected(RejectReason::Transport)
                }
                Err(StepError::Round(_)) => continue,
                Ok(None) => continue,
                Ok(Some((thought, answer, raw))) => {
                    if round == 1 {
                        return ForgeOutcome::Rejected(RejectReason::NonReflection);
                    }
                    context.push(
                        ContextSource::SummarizerOutput,
                        format!("{thought}\nFinal Answer: {answer}"),
                    );
                    transcript.push(TranscriptMessage {
                        role: TranscriptRole::Summarizer,
                        text: raw,
                    });
                    return self
                        .finish_sample(task, &context, transcript, round)
                        .await;
                }
            }
        }
        ForgeOutcome::Rejected(RejectReason::BudgetExhausted)
    }

    /// One requester -> responder -> summarizer round. `Ok(Some(..))` means
    /// the summarizer's answer matched; `Ok(None)` means it was discarded.
    async fn run_round(
        &self,
        task: &ForgeTask,
        context: &mut ReasoningContext,
        transcript: &mut Vec<TranscriptMessage>,
    ) -> Result<Option<(String, String, String)>, StepError> {
        let (_, visual_question, requester_raw) =
            self.request_visual(context, &task.question).await?;
        transcript.push(TranscriptMessage {
            role: TranscriptRole::Requester,
            text: requester_raw,
        });

        let description = self
            .respond_visual(context, &visual_question, &task.image)
            .await?;
        transcript.push(TranscriptMessage {
            role: TranscriptRole::Responder,
            text: description,
        });

        let (thought, answer, raw) = self.summarize(context, &task.question).await?;
        if self.config.answer_match.matches(&answer, &task.answer) {
            Ok(Some((thought, answer, raw)))
        } else {
            // Wrong answer: every summarizer output from this round is
            // discarded and a new round of interaction begins.
            Ok(None)
        }
    }

    async fn finish_sample(
        &self,
        task: &ForgeTask,
        context: &ReasoningContext,
        mut transcript: Vec<TranscriptMessage>,
        rounds: u32,
    ) -> ForgeOutcome {
        let cohesion = match self
            .enhance_cohesion(context, &task.question, &task.answer)
            .await
        {
            Ok(result) => result,
            Err(CohesionFailure::Drift) => {
                return ForgeOutcome::Rejected(RejectReason::CohesionDrift)
            }
            Err(CohesionFailure::Parse) => {
                return ForgeOutcome::Rejected(RejectReason::CohesionParse)
            }
            Err(CohesionFailure::MissingConnector) => {
                return ForgeOutcome::Rejected(RejectReason::MissingConnector)
            }
            Err(CohesionFailure::Transport(_)) => {
                return ForgeOutcome::Rejected(RejectReason::Transport)
            }
        };
        transcript.push(TranscriptMessage {
            role: TranscriptRole::Cohesion,
            text: cohesion.raw_reply,
        });
        let sample = ReasoningSample {
            sample_id: task_id(task),
            image_ref: task.image.clone(),
            question: task.question.clone(),
            reasoning: cohesion.reasoning,
            final_answer: cohesion.boxed_answer,
            ground_truth: task.answer.clone(),
            rounds,
            transcript,
            provenance: Provenance {
                llm_model: self.clients.llm_model.clone(),
                vlm_model: self.clients.vlm_model.clone(),
                created_at: self.created_at(),
            },
        };
        debug_assert!(sample.validate().is_ok());
        ForgeOutcome::Sample(Box::new(sample))
    }

    fn created_at(&self) -> String {
        match &self.config.timestamp {
            Some(fixed) => fixed.clone(),
            None => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs().to_string())
                .unwrap_or_else(|_| "0".into()),
        }
    }
}

/// Accepted cohesion rewrite.
#[derive(Debug, Clone, PartialEq)]
pub struct CohesionResult {
    pub reasoning: String,
    pub boxed_answer: String,
    pub raw_reply: String,
}

#[derive(Debug)]
pub enum CohesionFailure {
    Drift,
    Parse,
    MissingConnector,
    Transport(GatewayError),
}

/// Stable task id from the task content.
fn task_id(task: &ForgeTask) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in task
        .question
        .bytes()
        .chain([0xff])
        .chain(task.image.bytes())
        .chain([0xff])
        .chain(task.answer.bytes())
    {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("forge-{hash:016x}")
}
