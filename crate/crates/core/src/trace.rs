//! Data model and file format for attention traces and forged reasoning samples.
//!
//! A trace is one JSON document (UTF-8) recording, for a single generation,
//! the head-averaged attention from each response token to every visual token
//! at each recorded layer, plus optional paired next-token distributions.
//! Forged reasoning samples are persisted as JSON Lines, one object per line.
//!
//! Numeric round-trips are bit-exact: weights serialize as shortest decimal
//! strings that parse back to the identical float, so `read(write(t)) == t`
//! field for field.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{scalar, Scalar};

/// Reserved token id for the OTHER bucket that absorbs truncated
/// probability mass in stored distributions.
pub const OTHER_TOKEN_ID: i64 = -1;

/// Errors raised while reading, writing, or validating traces and samples.
#[derive(Debug, Error)]
pub enum TraceError {
    /// The document is not valid JSON for the schema.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// The document parsed but violates an invariant.
    #[error("validation error: {field}: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceError {
    fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        TraceError::Invalid {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

/// Index spans identifying visual, question, and response tokens within one
/// full token sequence. Spans are half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenPartition {
    pub visual_span: (usize, usize),
    pub question_span: (usize, usize),
    /// Index of the first generated response token.
    pub response_start: usize,
    /// Total number of generated response tokens, `|T_res|`.
    pub response_len: usize,
}

impl TokenPartition {
    /// Number of visual tokens, `|T_vis|`.
    pub fn num_visual_tokens(&self) -> usize {
        self.visual_span.1 - self.visual_span.0
    }

    fn validate(&self) -> Result<(), TraceError> {
        for (name, span) in [
            ("partition.visual_span", self.visual_span),
            ("partition.question_span", self.question_span),
        ] {
            if span.0 > span.1 {
                return Err(TraceError::invalid(name, "span start exceeds end"));
            }
            if span.1 > self.response_start {
                return Err(TraceError::invalid(name, "span extends past response_start"));
            }
        }
        let (v, q) = (self.visual_span, self.question_span);
        let disjoint = v.0 == v.1 || q.0 == q.1 || v.1 <= q.0 || q.1 <= v.0;
        if !disjoint {
            return Err(TraceError::invalid(
                "partition",
                "visual_span and question_span overlap",
            ));
        }
        if self.response_len == 0 {
            return Err(TraceError::invalid("partition.response_len", "must be >= 1"));
        }
        Ok(())
    }
}

/// Two truncated probability distributions over the vocabulary at one
/// generation step: next-token probabilities with and without the visual
/// tokens in context, aligned to a shared support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionPair<S> {
    /// Union of top-K token ids from each side plus the reserved OTHER id.
    pub support_ids: Vec<i64>,
    pub with_visual: Vec<S>,
    pub without_visual: Vec<S>,
}

impl<S: Scalar> DistributionPair<S> {
    fn validate(&self, field: &str) -> Result<(), TraceError> {
        if self.with_visual.len() != self.support_ids.len()
            || self.without_visual.len() != self.support_ids.len()
        {
            return Err(TraceError::invalid(
                field,
                "probability vectors must align with support_ids",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        let mut other_count = 0usize;
        for id in &self.support_ids {
            if !seen.insert(*id) {
                return Err(TraceError::invalid(
                    format!("{field}.support_ids"),
                    "token ids must be unique",
                ));
            }
            if *id == OTHER_TOKEN_ID {
                other_count += 1;
            }
        }
        if other_count != 1 {
            return Err(TraceError::invalid(
                format!("{field}.support_ids"),
                "OTHER id must appear exactly once",
            ));
        }
        for (name, probs) in [
            ("with_visual", &self.with_visual),
            ("without_visual", &self.without_visual),
        ] {
            let mut sum = S::zero();
            for (i, p) in probs.iter().enumerate() {
                if !(*p >= S::zero() && *p <= S::one()) {
                    return Err(TraceError::invalid(
                        format!("{field}.{name}[{i}]"),
                        "probability out of [0,1]",
                    ));
                }
                sum = sum + *p;
            }
            if (sum - S::one()).abs() > scalar(PROB_SUM_TOLERANCE) {
                return Err(TraceError::invalid(
                    format!("{field}.{name}"),
                    "probabilities must sum to 1.0 within 1e-6",
                ));
            }
        }
        Ok(())
    }
}

/// Tolerance on the total mass of a stored probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Attention snapshot at one response-token position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionStep<S> {
    /// 1-based response-token position.
    pub n: usize,
    /// Head-averaged attention weights, `attn[layer][visual_token]`,
    /// one row per recorded layer.
    pub attn: Vec<Vec<S>>,
    pub dist_pair: Option<DistributionPair<S>>,
}

/// Per-response-token, per-layer attention to visual tokens for one
/// generation, with optional paired next-token distributions.
///
/// Steps may be sparse: capture tools are free to subsample positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionTrace<S> {
    pub sample_id: String,
    /// Original model layer indices of the recorded layers, strictly increasing.
    pub layer_ids: Vec<usize>,
    pub partition: TokenPartition,
    pub steps: Vec<AttentionStep<S>>,
}

impl<S: Scalar> AttentionTrace<S> {
    pub fn num_layers_recorded(&self) -> usize {
        self.layer_ids.len()
    }

    /// Looks up the step recorded at position `n`.
    pub fn step_at(&self, n: usize) -> Option<&AttentionStep<S>> {
        self.steps.iter().find(|s| s.n == n)
    }

    /// Checks every invariant; `read_trace` and `write_trace` both call this,
    /// so a violating document can never round-trip silently.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.layer_ids.is_empty() {
            return Err(TraceError::invalid("layer_ids", "at least one layer required"));
        }
        if !self.layer_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(TraceError::invalid("layer_ids", "not strictly increasing"));
        }
        self.partition.validate()?;
        let num_visual = self.partition.num_visual_tokens();
        if !self.steps.windows(2).all(|w| w[0].n < w[1].n) {
            return Err(TraceError::invalid("steps", "steps not strictly increasing"));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.n < 1 || step.n > self.partition.response_len {
                return Err(TraceError::invalid(
                    format!("steps[{i}].n"),
                    "position out of [1, response_len]",
                ));
            }
            if step.attn.len() != self.layer_ids.len() {
                return Err(TraceError::invalid(
                    format!("steps[{i}].attn"),
                    "one weight vector required per recorded layer",
                ));
            }
            for (l, row) in step.attn.iter().enumerate() {
                if row.len() != num_visual {
                    return Err(TraceError::invalid(
                        format!("steps[{i}].attn[{l}]"),
                        "vector length must equal |visual_span|",
                    ));
                }
                for (j, w) in row.iter().enumerate() {
                    if !(*w >= S::zero() && *w <= S::one()) {
                        return Err(TraceError::invalid(
                            format!("steps[{i}].attn[{l}][{j}]"),
                            "weight out of [0,1]",
                        ));
                    }
                }
            }
            if let Some(pair) = &step.dist_pair {
                pair.validate(&format!("steps[{i}].dist_pair"))?;
            }
        }
        Ok(())
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

/// Reads and validates one trace document from `source`.
pub fn read_trace<S, R>(mut source: R) -> Result<AttentionTrace<S>, TraceError>
where
    S: Scalar + DeserializeOwned,
    R: Read,
{
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    read_trace_str(&text)
}

/// Reads and validates one trace document from an in-memory string.
pub fn read_trace_str<S>(text: &str) -> Result<AttentionTrace<S>, TraceError>
where
    S: Scalar + DeserializeOwned,
{
    let trace: AttentionTrace<S> =
        serde_json::from_str(text).map_err(|err| TraceError::Parse {
            offset: byte_offset(text, err.line(), err.column()),
            message: err.to_string(),
        })?;
    trace.validate()?;
    Ok(trace)
}

/// Validates and writes one trace document to `sink`.
pub fn write_trace<S, W>(trace: &AttentionTrace<S>, mut sink: W) -> Result<(), TraceError>
where
    S: Scalar + Serialize,
    W: Write,
{
    sink.write_all(write_trace_string(trace)?.as_bytes())?;
    Ok(())
}

/// Validates and serializes one trace document to a string.
pub fn write_trace_string<S>(trace: &AttentionTrace<S>) -> Result<String, TraceError>
where
    S: Scalar + Serialize,
{
    trace.validate()?;
    serde_json::to_string(trace).map_err(|err| TraceError::Parse {
        offset: 0,
        message: err.to_string(),
    })
}

/// Role tag for a message in a forged sample's transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptRole {
    Requester,
    Responder,
    Summarizer,
    Cohesion,
}

/// One role-tagged message from the data-construction interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub role: TranscriptRole,
    pub text: String,
}

/// Model identifiers and creation time for a forged sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub llm_model: String,
    pub vlm_model: String,
    pub created_at: String,
}

/// One forged training record: a question, the stitched reasoning that
/// re-consults the image across rounds, and the verified final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSample {
    pub sample_id: String,
    pub image_ref: String,
    pub question: String,
    pub reasoning: String,
    pub final_answer: String,
    pub ground_truth: String,
    pub rounds: u32,
    pub transcript: Vec<TranscriptMessage>,
    pub provenance: Provenance,
}

impl ReasoningSample {
    /// Structural invariants every persisted sample must satisfy. The
    /// answer-match invariant additionally holds because the pipeline only
    /// persists samples whose final answer matched the ground truth.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.rounds < 2 {
            return Err(TraceError::invalid(
                "rounds",
                "persisted samples require rounds >= 2",
            ));
        }
        if !self.reasoning.contains("\\boxed{") {
            return Err(TraceError::invalid(
                "reasoning",
                "missing boxed final answer marker",
            ));
        }
        Ok(())
    }
}

/// Appends reasoning samples as JSON Lines.
pub fn write_samples_jsonl<W: Write>(
    samples: &[ReasoningSample],
    mut sink: W,
) -> Result<(), TraceError> {
    for sample in samples {
        sample.validate()?;
        let line = serde_json::to_string(sample).map_err(|err| TraceError::Parse {
            offset: 0,
            message: err.to_string(),
        })?;
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads reasoning samples from JSON Lines, skipping blank lines.
pub fn read_samples_jsonl<R: Read>(source: R) -> Result<Vec<ReasoningSample>, TraceError> {
    let mut text = String::new();
    let mut reader = std::io::BufReader::new(source);
    reader.read_to_string(&mut text)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: ReasoningSample =
            serde_json::from_str(line).map_err(|err| TraceError::Parse {
                offset: byte_offset(line, err.line(), err.column()),
                message: format!("line {}: {}", lineno + 1, err),
            })?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> &'static str {
        r#"{
            "sample_id": "t0",
            "layer_ids": [27],
            "partition": {"visual_span": [0, 2], "question_span": [2, 5], "response_start": 5, "response_len": 3},
            "steps": [{"n": 1, "attn": [[0.25, 0.5]], "dist_pair": null}]
        }"#
    }

    #[test]
    fn reads_minimal_document() {
        let trace: AttentionTrace<f64> = read_trace_str(minimal_doc()).unwrap();
        assert_eq!(trace.sample_id, "t0");
        assert_eq!(trace.partition.response_len, 3);
        assert_eq!(trace.num_layers_recorded(), 1);
        assert_eq!(trace.partition.num_visual_tokens(), 2);
    }

    #[test]
    fn rejects_weight_above_one() {
        let doc = minimal_doc().replace("0.25", "1.3");
        let err = read_trace_str::<f64>(&doc).unwrap_err();
        assert!(err.to_string().contains("weight out of [0,1]"), "{err}");
    }

    #[test]
    fn rejects_nan_weight() {
        // NaN is not valid JSON; a null weight is a parse error, not a panic.
        let doc = minimal_doc().replace("0.25", "null");
        assert!(matches!(
            read_trace_str::<f64>(&doc).unwrap_err(),
            TraceError::Parse { .. }
        ));
    }

    #[test]
    fn rejects_unordered_steps() {
        let doc = minimal_doc().replace(
            r#"[{"n": 1, "attn": [[0.25, 0.5]], "dist_pair": null}]"#,
            r#"[{"n": 3, "attn": [[0.25, 0.5]], "dist_pair": null},
                {"n": 2, "attn": [[0.25, 0.5]], "dist_pair": null}]"#,
        );
        let err = read_trace_str::<f64>(&doc).unwrap_err();
        assert!(err.to_string().contains("steps not strictly increasing"), "{err}");
    }

    #[test]
    fn parse_error_names_byte_offset() {
        let doc = "{\"sample_id\": oops}";
        match read_trace_str::<f64>(doc).unwrap_err() {
            TraceError::Parse { offset, .. } => assert_eq!(offset, 14),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_duplicate_other_bucket() {
        let doc = minimal_doc().replace(
            "\"dist_pair\": null",
            "\"dist_pair\": {\"support_ids\": [-1, -1], \"with_visual\": [0.5, 0.5], \"without_visual\": [0.5, 0.5]}",
        );
        let err = read_trace_str::<f64>(&doc).unwrap_err();
        assert!(err.to_string().contains("unique"), "{err}");
    }

    #[test]
    fn rejects_probability_sum_off_by_more_than_tolerance() {
        let doc = minimal_doc().replace(
            "\"dist_pair\": null",
            "\"dist_pair\": {\"support_ids\": [7, -1], \"with_visual\": [0.6, 0.5], \"without_visual\": [0.5, 0.5]}",
        );
        let err = read_trace_str::<f64>(&doc).unwrap_err();
        assert!(err.to_string().contains("sum to 1.0"), "{err}");
    }

    #[test]
    fn sparse_steps_round_trip() {
        let doc = r#"{
            "sample_id": "sparse",
            "layer_ids": [3, 9],
            "partition": {"visual_span": [0, 1], "question_span": [1, 2], "response_start": 2, "response_len": 400},
            "steps": [
                {"n": 1, "attn": [[0.4], [0.5]], "dist_pair": null},
                {"n": 50, "attn": [[0.3], [0.2]], "dist_pair": null},
                {"n": 300, "attn": [[0.1], [0.05]], "dist_pair": null}
            ]
        }"#;
        let trace: AttentionTrace<f64> = read_trace_str(doc).unwrap();
        let written = write_trace_string(&trace).unwrap();
        let reread: AttentionTrace<f64> = read_trace_str(&written).unwrap();
        assert_eq!(trace, reread);
        assert_eq!(
            reread.steps.iter().map(|s| s.n).collect::<Vec<_>>(),
            vec![1, 50, 300]
        );
    }

    #[test]
    fn f32_traces_round_trip_too() {
        let doc = minimal_doc();
        let trace: AttentionTrace<f32> = read_trace_str(doc).unwrap();
        let written = write_trace_string(&trace).unwrap();
        let reread: AttentionTrace<f32> = read_trace_str(&written).unwrap();
        assert_eq!(trace, reread);
    }

    #[test]
    fn sample_validation_requires_reflection_and_boxed_marker() {
        let mut sample = ReasoningSample {
            sample_id: "s".into(),
            image_ref: "img.png".into(),
            question: "q".into(),
            reasoning: "thinking \\boxed{B}".into(),
            final_answer: "B".into(),
            ground_truth: "B".into(),
            rounds: 2,
            transcript: vec![],
            provenance: Provenance {
                llm_model: "llm".into(),
                vlm_model: "vlm".into(),
                created_at: "0".into(),
            },
        };
        assert!(sample.validate().is_ok());
        sample.rounds = 1;
        assert!(sample.validate().is_err());
        sample.rounds = 2;
        sample.reasoning = "no marker".into();
        assert!(sample.validate().is_err());
    }
}
