//! Rule-based rollout rewards: accuracy, format, visual attention, and their
//! weighted combination.
//!
//! The visual-attention reward is the ratio of summed per-step attention in
//! the second half of the response to the first half, computed on the last
//! recorded layer. A correct rollout that keeps (or raises) its attention to
//! visual tokens late in generation therefore scores at or above 1; the
//! ratio is deliberately not clamped.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{attn_visual_step, MetricsError};
use crate::scalar::{scalar, Scalar};
use crate::trace::AttentionTrace;

#[derive(Debug, Error)]
pub enum RewardError {
    /// The first-half attention sum is zero, so the ratio is undefined.
    #[error("DegenerateAttention: first-half attention sums to zero")]
    DegenerateAttention,
    /// One half of the response has no recorded steps at all; rewarding an
    /// under-instrumented rollout would corrupt training.
    #[error("DegenerateHalf: no recorded steps in the {half} half of the response")]
    DegenerateHalf { half: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl RewardError {
    /// Stable error-kind name used in exit diagnostics and HTTP bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            RewardError::DegenerateAttention => "DegenerateAttention",
            RewardError::DegenerateHalf { .. } => "DegenerateHalf",
            RewardError::InvalidInput(_) => "InvalidInput",
        }
    }
}

/// Scoring coefficients; `r_v_cap` ships disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig<S> {
    pub lambda_v: S,
    pub lambda_f: S,
    pub r_v_cap: Option<S>,
}

impl<S: Scalar> Default for RewardConfig<S> {
    fn default() -> Self {
        RewardConfig {
            lambda_v: scalar(DEFAULT_LAMBDA_V),
            lambda_f: scalar(DEFAULT_LAMBDA_F),
            r_v_cap: None,
        }
    }
}

pub const DEFAULT_LAMBDA_V: f64 = 0.5;
pub const DEFAULT_LAMBDA_F: f64 = 0.1;

/// Per-rollout reward components and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<S> {
    pub r_a: u8,
    pub r_v: S,
    pub r_f: u8,
    pub lambda_v: S,
    pub lambda_f: S,
    pub r_o: S,
}

/// Normalizes an answer for matching: trim, case-fold, strip one trailing
/// period.
pub fn normalize_answer(answer: &str) -> String {
    let lowered = answer.trim().to_lowercase();
    let stripped = lowered.strip_suffix('.').unwrap_or(&lowered);
    stripped.trim_end().to_string()
}

/// Extracts the contents of the last `\boxed{...}` span, honoring nested
/// braces. Returns `None` when no balanced span exists.
pub fn extract_boxed(text: &str) -> Option<&str> {
    const MARKER: &str = "\\boxed{";
    let mut found = None;
    let mut search = 0;
    while let Some(pos) = text[search..].find(MARKER) {
        let start = search + pos + MARKER.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, c) in text[start..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(start + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                found = Some(&text[start..e]);
                search = e + 1;
            }
            None => break,
        }
    }
    found
}

/// 1 iff the last boxed span of `response` matches `ground_truth` after
/// normalization. A response without a boxed span scores 0: an unparseable
/// answer is wrong, not an error. An empty ground truth never matches.
pub fn accuracy_reward(response: &str, ground_truth: &str) -> u8 {
    let gt = normalize_answer(ground_truth);
    if gt.is_empty() {
        return 0;
    }
    match extract_boxed(response) {
        Some(answer) if normalize_answer(answer) == gt => 1,
        _ => 0,
    }
}

/// 1 iff the response contains exactly one well-ordered `<think>...</think>`
/// block followed by material containing a boxed span.
pub fn format_reward(response: &str) -> u8 {
    let opens: Vec<usize> = response.match_indices("<think>").map(|(i, _)| i).collect();
    let closes: Vec<usize> = response.match_indices("</think>").map(|(i, _)| i).collect();
    if opens.len() != 1 || closes.len() != 1 || closes[0] < opens[0] {
        return 0;
    }
    let after = &response[closes[0] + "</think>".len()..];
    u8::from(extract_boxed(after).is_some())
}

/// Visual-attention reward: ratio of second-half to first-half summed
/// per-step attention on the last recorded layer, or 0 when the rollout is
/// wrong. The midpoint position (even response lengths only) belongs to
/// neither half. Sums run over recorded steps only; steps whose attention is
/// entirely zero contribute no mass.
pub fn visual_attention_reward<S: Scalar>(
    trace: &AttentionTrace<S>,
    r_a: u8,
) -> Result<S, RewardError> {
    if r_a == 0 {
        return Ok(S::zero());
    }
    if trace.layer_ids.is_empty() {
        return Err(RewardError::InvalidInput("trace records no layers".into()));
    }
    let last_layer = [trace.layer_ids.len() - 1];
    let response_len = trace.partition.response_len;

    let mut first_steps = 0usize;
    let mut second_steps = 0usize;
    let mut numerator = S::zero();
    let mut denominator = S::zero();
    for step in &trace.steps {
        // Strict halves: 2n < len is the first half, 2n > len the second.
        let side = (2 * step.n).cmp(&response_len);
        if side == Ordering::Equal {
            continue;
        }
        let value = match attn_visual_step(step, &last_layer) {
            Ok(v) => v,
            Err(MetricsError::DegenerateAttention { .. }) => S::zero(),
            Err(other) => return Err(RewardError::InvalidInput(other.to_string())),
        };
        match side {
            Ordering::Less => {
                first_steps += 1;
                denominator = denominator + value;
            }
            Ordering::Greater => {
                second_steps += 1;
                numerator = numerator + value;
            }
            Ordering::Equal => unreachable!(),
        }
    }
    if first_steps == 0 {
        return Err(RewardError::DegenerateHalf { half: "first" });
    }
    if second_steps == 0 {
        return Err(RewardError::DegenerateHalf { half: "second" });
    }
    if denominator <= S::zero() {
        return Err(RewardError::DegenerateAttention);
    }
    Ok(numerator / denominator)
}

/// Combines the three rewards: `r_o = r_a + lambda_v * r_v + lambda_f * r_f`.
pub fn overall_reward<S: Scalar>(
    r_a: u8,
    r_v: S,
    r_f: u8,
    lambda_v: S,
    lambda_f: S,
) -> Result<RewardBreakdown<S>, RewardError> {
    if r_a > 1 {
        return Err(RewardError::InvalidInput("r_a must be 0 or 1".into()));
    }
    if r_f > 1 {
        return Err(RewardError::InvalidInput("r_f must be 0 or 1".into()));
    }
    if r_v.is_nan() || r_v < S::zero() {
        return Err(RewardError::InvalidInput("r_v must be >= 0".into()));
    }
    if r_a == 0 && r_v != S::zero() {
        return Err(RewardError::InvalidInput(
            "r_v must be 0 when r_a is 0".into(),
        ));
    }
    if !lambda_v.is_finite() || !lambda_f.is_finite() {
        return Err(RewardError::InvalidInput("coefficients must be finite".into()));
    }
    let r_o = scalar::<S>(f64::from(r_a)) + lambda_v * r_v + lambda_f * scalar(f64::from(r_f));
    Ok(RewardBreakdown {
        r_a,
        r_v,
        r_f,
        lambda_v,
        lambda_f,
        r_o,
    })
}

/// Scores one rollout end to end: accuracy and format from the response
/// text, the visual-attention ratio from the trace, then the weighted sum.
pub fn score_rollout<S: Scalar>(
    response: &str,
    ground_truth: &str,
    trace: &AttentionTrace<S>,
    config: &RewardConfig<S>,
) -> Result<RewardBreakdown<S>, RewardError> {
    if ground_truth.trim().is_empty() {
        return Err(RewardError::InvalidInput("ground truth is empty".into()));
    }
    let r_a = accuracy_reward(response, ground_truth);
    let r_f = format_reward(response);
    let mut r_v = visual_attention_reward(trace, r_a)?;
    if let Some(cap) = config.r_v_cap {
        if r_v > cap {
            r_v = cap;
        }
    }
    overall_reward(r_a, r_v, r_f, config.lambda_v, config.lambda_f)
}
