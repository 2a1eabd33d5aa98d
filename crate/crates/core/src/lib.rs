//! Core library for measuring and rewarding visual grounding in
//! vision-language reasoning.
//!
//! - [`trace`]: the attention-trace data model and its bit-exact JSON
//!   format, plus forged reasoning samples and their JSON Lines format.
//! - [`metrics`]: per-token visual attention, Hellinger distance, the
//!   visual dependency measure, and decay-curve aggregation with bootstrap
//!   confidence bands.
//! - [`reward`]: accuracy / format / visual-attention rewards and their
//!   weighted combination for RL rollout scoring.
//! - [`synth`]: seeded synthetic traces with closed-form oracles.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the `f64` instantiation used by the CLI and the reward
//! service.

pub mod metrics;
pub mod reward;
pub mod scalar;
pub mod synth;
pub mod trace;

pub use scalar::Scalar;

/// `f64` trace, the working precision of tools and service.
pub type AttentionTrace64 = trace::AttentionTrace<f64>;
pub type AttentionStep64 = trace::AttentionStep<f64>;
pub type DistributionPair64 = trace::DistributionPair<f64>;
pub type DecayCurve64 = metrics::DecayCurve<f64>;
pub type RewardBreakdown64 = reward::RewardBreakdown<f64>;
pub type RewardConfig64 = reward::RewardConfig<f64>;
pub type DecayProfile64 = synth::DecayProfile<f64>;

/// `f32` instantiations, for consumers that ingest single-precision dumps.
pub type AttentionTrace32 = trace::AttentionTrace<f32>;
pub type AttentionStep32 = trace::AttentionStep<f32>;
pub type DistributionPair32 = trace::DistributionPair<f32>;
pub type DecayCurve32 = metrics::DecayCurve<f32>;
pub type RewardBreakdown32 = reward::RewardBreakdown<f32>;
pub type RewardConfig32 = reward::RewardConfig<f32>;
pub type DecayProfile32 = synth::DecayProfile<f32>;
