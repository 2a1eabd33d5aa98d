//! Seeded synthetic attention traces with closed-form per-step values.
//!
//! Every generated trace is built so the last-layer attention mean at
//! position `n` equals `profile.target_at(n)` and, when distribution pairs
//! are requested, the Hellinger distance between the paired distributions
//! hits the same target analytically. That closed form is the oracle the
//! metric and reward tests check against.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{scalar, Scalar};
use crate::trace::{
    AttentionStep, AttentionTrace, DistributionPair, TokenPartition, OTHER_TOKEN_ID,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile yields weight out of [0,1] at position {n}: {value}")]
    WeightOutOfRange { n: usize, value: f64 },
    #[error("count must be >= 1")]
    InvalidCount,
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
}

/// Attention re-surge at one position, modeling a "check the image again"
/// moment where visual attention spikes mid-decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Spike<S> {
    pub position: usize,
    pub height: S,
}

/// Shape of the per-position attention target.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileShape<S> {
    Constant { value: S },
    /// `initial * exp(-rate * (n - 1))`.
    Exponential { initial: S, rate: S },
    /// Exponential decay with spike positions overriding the base curve.
    Reflective {
        initial: S,
        rate: S,
        spikes: Vec<Spike<S>>,
    },
}

/// Decay profile driving a synthetic trace; `noise` is a multiplicative
/// amplitude in `[0, 1)` applied in mean-preserving pairs, 0 disables it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile<S> {
    pub shape: ProfileShape<S>,
    pub noise: S,
}

impl<S: Scalar> DecayProfile<S> {
    pub fn constant(value: S) -> Self {
        DecayProfile {
            shape: ProfileShape::Constant { value },
            noise: S::zero(),
        }
    }

    pub fn exponential(initial: S, rate: S) -> Self {
        DecayProfile {
            shape: ProfileShape::Exponential { initial, rate },
            noise: S::zero(),
        }
    }

    pub fn reflective(initial: S, rate: S, spikes: Vec<Spike<S>>) -> Self {
        DecayProfile {
            shape: ProfileShape::Reflective {
                initial,
                rate,
                spikes,
            },
            noise: S::zero(),
        }
    }

    pub fn with_noise(mut self, amplitude: S) -> Self {
        self.noise = amplitude;
        self
    }

    /// Rate such that an exponential profile reaches `fraction` of its
    /// initial value at position `position` (which must be >= 2).
    pub fn rate_for_drop(fraction: S, position: usize) -> S {
        assert!(position >= 2, "drop position must be >= 2");
        -(fraction.ln()) / scalar((position - 1) as f64)
    }

    /// Closed-form target value at 1-based position `n`.
    pub fn target_at(&self, n: usize) -> S {
        match &self.shape {
            ProfileShape::Constant { value } => *value,
            ProfileShape::Exponential { initial, rate } => {
                *initial * (-*rate * scalar((n - 1) as f64)).exp()
            }
            ProfileShape::Reflective {
                initial,
                rate,
                spikes,
            } => match spikes.iter().find(|s| s.position == n) {
                Some(spike) => spike.height,
                None => *initial * (-*rate * scalar((n - 1) as f64)).exp(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let check_initial = |initial: S| {
            if initial <= S::zero() || initial > S::one() {
                Err(SynthError::InvalidProfile("initial must be in (0,1]".into()))
            } else {
                Ok(())
            }
        };
        match &self.shape {
            ProfileShape::Constant { value } => check_initial(*value)?,
            ProfileShape::Exponential { initial, rate } => {
                check_initial(*initial)?;
                if *rate < S::zero() {
                    return Err(SynthError::InvalidProfile("rate must be >= 0".into()));
                }
            }
            ProfileShape::Reflective {
                initial,
                rate,
                spikes,
            } => {
                check_initial(*initial)?;
                if *rate < S::zero() {
                    return Err(SynthError::InvalidProfile("rate must be >= 0".into()));
                }
                for spike in spikes {
                    if spike.position == 0 {
                        return Err(SynthError::InvalidProfile(
                            "spike positions are 1-based".into(),
                        ));
                    }
                    check_initial(spike.height).map_err(|_| {
                        SynthError::InvalidProfile("spike height must be in (0,1]".into())
                    })?;
                }
            }
        }
        if self.noise < S::zero() || self.noise >= S::one() {
            return Err(SynthError::InvalidProfile("noise must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Dimensions of a generated trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDims {
    pub response_len: usize,
    pub num_layers: usize,
    pub num_visual_tokens: usize,
    /// Attach a distribution pair (with the profile's Hellinger target) to
    /// every step.
    pub dist_pairs: bool,
}

impl TraceDims {
    fn validate(&self) -> Result<(), SynthError> {
        if self.response_len == 0 || self.num_layers == 0 || self.num_visual_tokens == 0 {
            return Err(SynthError::InvalidDims(
                "response_len, num_layers, num_visual_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Generation side channel: how often noise had to be clamped back into
/// `[0,1]`, which breaks per-step exactness at the clamped positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenReport {
    pub clamp_events: usize,
}

const QUESTION_TOKENS: usize = 12;
const SUPPORT_ID_A: i64 = 101;
const SUPPORT_ID_B: i64 = 102;

/// Generates one trace whose last-layer attention mean at every position
/// equals the profile's closed form (exactly when noise is 0).
pub fn generate_trace<S: Scalar>(
    profile: &DecayProfile<S>,
    dims: &TraceDims,
    seed: u64,
) -> Result<AttentionTrace<S>, SynthError> {
    generate_trace_with_report(profile, dims, seed).map(|(trace, _)| trace)
}

/// As [`generate_trace`], also reporting clamp events.
pub fn generate_trace_with_report<S: Scalar>(
    profile: &DecayProfile<S>,
    dims: &TraceDims,
    seed: u64,
) -> Result<(AttentionTrace<S>, GenReport), SynthError> {
    profile.validate()?;
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GenReport::default();
    let trace = build_trace(
        profile,
        dims,
        format!("synth-{seed:016x}"),
        &mut rng,
        &mut report,
    )?;
    Ok((trace, report))
}

fn build_trace<S: Scalar>(
    profile: &DecayProfile<S>,
    dims: &TraceDims,
    sample_id: String,
    rng: &mut ChaCha8Rng,
    report: &mut GenReport,
) -> Result<AttentionTrace<S>, SynthError> {
    let visual = dims.num_visual_tokens;
    let partition = TokenPartition {
        visual_span: (0, visual),
        question_span: (visual, visual + QUESTION_TOKENS),
        response_start: visual + QUESTION_TOKENS,
        response_len: dims.response_len,
    };
    let mut steps = Vec::with_capacity(dims.response_len);
    for n in 1..=dims.response_len {
        let target = profile.target_at(n);
        if target <= S::zero() || target > S::one() {
            return Err(SynthError::WeightOutOfRange {
                n,
                value: target.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mut attn = Vec::with_capacity(dims.num_layers);
        for _ in 0..dims.num_layers {
            attn.push(weight_row(target, visual, profile.noise, rng, report));
        }
        let dist_pair = dims.dist_pairs.then(|| distribution_pair(target));
        steps.push(AttentionStep { n, attn, dist_pair });
    }
    Ok(AttentionTrace {
        sample_id,
        layer_ids: (0..dims.num_layers).collect(),
        partition,
        steps,
    })
}

/// One per-visual-token weight row averaging exactly to `target`: noise is
/// applied to token pairs with opposite signs so the row mean is preserved.
fn weight_row<S: Scalar>(
    target: S,
    len: usize,
    noise: S,
    rng: &mut ChaCha8Rng,
    report: &mut GenReport,
) -> Vec<S> {
    let mut row = vec![target; len];
    if noise > S::zero() {
        for pair in row.chunks_mut(2) {
            if pair.len() < 2 {
                break;
            }
            let delta = noise * scalar(rng.random_range(0.0..1.0));
            let mut up = target * (S::one() + delta);
            if up > S::one() {
                up = S::one();
                report.clamp_events += 1;
            }
            pair[0] = up;
            pair[1] = target * (S::one() - delta);
        }
    }
    row
}

/// Two-point-plus-OTHER distributions whose Hellinger distance is exactly
/// `target`: with = [1, 0, 0] and without = [c, 1-c, 0] where
/// `c = (1 - target^2)^2`.
fn distribution_pair<S: Scalar>(target: S) -> DistributionPair<S> {
    let c = {
        let base = S::one() - target * target;
        base * base
    };
    DistributionPair {
        support_ids: vec![SUPPORT_ID_A, SUPPORT_ID_B, OTHER_TOKEN_ID],
        with_visual: vec![S::one(), S::zero(), S::zero()],
        without_visual: vec![c, S::one() - c, S::zero()],
    }
}

/// Response-length distribution for a fleet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LenDistribution {
    Fixed(usize),
    /// Inclusive uniform range.
    Uniform { min: usize, max: usize },
}

impl LenDistribution {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<usize, SynthError> {
        match self {
            LenDistribution::Fixed(len) => {
                if *len == 0 {
                    return Err(SynthError::InvalidDims("length must be >= 1".into()));
                }
                Ok(*len)
            }
            LenDistribution::Uniform { min, max } => {
                if *min == 0 || min > max {
                    return Err(SynthError::InvalidDims(
                        "uniform length range requires 1 <= min <= max".into(),
                    ));
                }
                Ok(rng.random_range(*min..=*max))
            }
        }
    }
}

/// Fleet parameters: every trace shares the layer/visual dimensions while
/// lengths come from the declared distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FleetSpec {
    pub count: usize,
    pub lengths: LenDistribution,
    pub num_layers: usize,
    pub num_visual_tokens: usize,
    pub dist_pairs: bool,
}

/// Generates `spec.count` traces deterministically from `seed`.
pub fn generate_fleet<S: Scalar>(
    profile: &DecayProfile<S>,
    spec: &FleetSpec,
    seed: u64,
) -> Result<Vec<AttentionTrace<S>>, SynthError> {
    if spec.count == 0 {
        return Err(SynthError::InvalidCount);
    }
    profile.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut fleet = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let response_len = spec.lengths.draw(&mut master)?;
        let dims = TraceDims {
            response_len,
            num_layers: spec.num_layers,
            num_visual_tokens: spec.num_visual_tokens,
            dist_pairs: spec.dist_pairs,
        };
        let trace_seed: u64 = master.random();
        let mut rng = ChaCha8Rng::seed_from_u64(trace_seed);
        let trace = build_trace(
            profile,
            &dims,
            format!("synth-{seed:016x}-{index:05}"),
            &mut rng,
            &mut GenReport::default(),
        )?;
        fleet.push(trace);
    }
    Ok(fleet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{attn_visual, vdm, LayerSelection};
    use crate::trace::write_trace_string;

    fn dims(len: usize) -> TraceDims {
        TraceDims {
            response_len: len,
            num_layers: 2,
            num_visual_tokens: 3,
            dist_pairs: true,
        }
    }

    #[test]
    fn constant_profile_hits_target_at_every_step() {
        let profile = DecayProfile::constant(0.4f64);
        let trace = generate_trace(&profile, &dims(10), 7).unwrap();
        for n in 1..=10 {
            let v = attn_visual(&trace, n, &LayerSelection::Last).unwrap();
            assert!((v - 0.4).abs() < 1e-12, "n={n}: {v}");
            let d = vdm(trace.step_at(n).unwrap()).unwrap();
            assert!((d - 0.4).abs() < 1e-10, "n={n}: vdm {d}");
        }
    }

    #[test]
    fn exponential_profile_quarter_at_300() {
        let rate = DecayProfile::rate_for_drop(0.25f64, 300);
        let profile = DecayProfile::exponential(0.4, rate);
        let trace = generate_trace(
            &profile,
            &TraceDims {
                response_len: 300,
                num_layers: 1,
                num_visual_tokens: 2,
                dist_pairs: false,
            },
            3,
        )
        .unwrap();
        let first = attn_visual(&trace, 1, &LayerSelection::Last).unwrap();
        let at_300 = attn_visual(&trace, 300, &LayerSelection::Last).unwrap();
        assert!((at_300 / first - 0.25).abs() < 1e-10, "{}", at_300 / first);
    }

    #[test]
    fn reflective_spike_overrides_decay() {
        let rate = DecayProfile::rate_for_drop(0.25f64, 300);
        let profile = DecayProfile::reflective(
            0.4,
            rate,
            vec![Spike {
                position: 200,
                height: 0.35,
            }],
        );
        let trace = generate_trace(
            &profile,
            &TraceDims {
                response_len: 250,
                num_layers: 1,
                num_visual_tokens: 2,
                dist_pairs: false,
            },
            9,
        )
        .unwrap();
        let spiked = attn_visual(&trace, 200, &LayerSelection::Last).unwrap();
        assert!((spiked - 0.35).abs() < 1e-12);
        let neighbor = attn_visual(&trace, 199, &LayerSelection::Last).unwrap();
        assert!(neighbor < 0.2, "decay should be well below the spike: {neighbor}");
    }

    #[test]
    fn determinism_is_byte_exact() {
        let profile = DecayProfile::constant(0.7f64).with_noise(0.3);
        let a = generate_trace(&profile, &dims(20), 42).unwrap();
        let b = generate_trace(&profile, &dims(20), 42).unwrap();
        assert_eq!(write_trace_string(&a).unwrap(), write_trace_string(&b).unwrap());
        let c = generate_trace(&profile, &dims(20), 43).unwrap();
        assert_ne!(write_trace_string(&a).unwrap(), write_trace_string(&c).unwrap());
    }

    #[test]
    fn noise_preserves_row_means_and_validates() {
        let profile = DecayProfile::constant(0.5f64).with_noise(0.5);
        let (trace, report) = generate_trace_with_report(&profile, &dims(30), 11).unwrap();
        trace.validate().unwrap();
        assert_eq!(report.clamp_events, 0);
        for n in 1..=30 {
            let v = attn_visual(&trace, n, &LayerSelection::Last).unwrap();
            assert!((v - 0.5).abs() < 1e-12, "n={n}: {v}");
        }
    }

    #[test]
    fn clamping_is_counted() {
        // 0.9 * (1 + delta) exceeds 1 for most draws.
        let profile = DecayProfile::constant(0.9f64).with_noise(0.9);
        let (_, report) = generate_trace_with_report(&profile, &dims(30), 13).unwrap();
        assert!(report.clamp_events > 0);
    }

    #[test]
    fn fleet_is_deterministic_and_respects_length_distribution() {
        let profile = DecayProfile::constant(0.4f64);
        let spec = FleetSpec {
            count: 10,
            lengths: LenDistribution::Uniform { min: 5, max: 50 },
            num_layers: 1,
            num_visual_tokens: 2,
            dist_pairs: false,
        };
        let a = generate_fleet(&profile, &spec, 21).unwrap();
        let b = generate_fleet(&profile, &spec, 21).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| (5..=50).contains(&t.partition.response_len)));
        assert!(a.iter().any(|t| t.partition.response_len != a[0].partition.response_len));
    }

    #[test]
    fn mixed_length_fleet_censors_later_buckets() {
        use crate::metrics::{decay_curve, CiSpec, CurveMetric, LayerSelection};
        let profile = DecayProfile::constant(0.4f64);
        let spec = FleetSpec {
            count: 40,
            lengths: LenDistribution::Uniform { min: 10, max: 200 },
            num_layers: 1,
            num_visual_tokens: 2,
            dist_pairs: false,
        };
        let fleet = generate_fleet(&profile, &spec, 77).unwrap();
        let curve = decay_curve(
            &fleet,
            CurveMetric::VisualAttention,
            &LayerSelection::Last,
            25,
            &CiSpec::None,
        )
        .unwrap();
        // Shorter traces drop out of later buckets, never re-enter.
        assert!(curve.n_samples.windows(2).all(|w| w[0] >= w[1]));
        assert!(curve.n_samples[0] > *curve.n_samples.last().unwrap());
    }

    #[test]
    fn zero_count_is_rejected() {
        let profile = DecayProfile::constant(0.4f64);
        let spec = FleetSpec {
            count: 0,
            lengths: LenDistribution::Fixed(10),
            num_layers: 1,
            num_visual_tokens: 1,
            dist_pairs: false,
        };
        assert!(matches!(
            generate_fleet(&profile, &spec, 1),
            Err(SynthError::InvalidCount)
        ));
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        assert!(DecayProfile::constant(0.0f64).validate().is_err());
        assert!(DecayProfile::constant(1.2f64).validate().is_err());
        assert!(DecayProfile::exponential(0.4f64, -0.1).validate().is_err());
        assert!(DecayProfile::constant(0.4f64).with_noise(1.0).validate().is_err());
    }
}
