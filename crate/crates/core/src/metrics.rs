//! Visual-grounding metrics over attention traces.
//!
//! Three quantities, plus the aggregation that turns a fleet of traces into
//! a decay curve:
//!
//! - `attn_visual`: mean attention from one response token to the visual
//!   tokens across a layer subset, normalized by the count of strictly
//!   positive entries.
//! - `hellinger`: `2^(-1/2) * sqrt(sum (sqrt(p_i) - sqrt(q_i))^2)`.
//! - `vdm`: Hellinger distance between the paired next-token distributions
//!   recorded with and without visual tokens.
//! - `decay_curve`: per-position-bucket means with optional percentile
//!   bootstrap confidence bands over per-sample means.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{scalar, scalar_from_usize, Scalar};
use crate::trace::{AttentionStep, AttentionTrace, PROB_SUM_TOLERANCE};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("MissingStep: no step recorded at position {n}")]
    MissingStep { n: usize },
    /// Every selected attention entry is zero, so the positive-entry
    /// denominator vanishes. Callers may map this to skip-the-step.
    #[error("DegenerateAttention: no strictly positive attention entries at position {n}")]
    DegenerateAttention { n: usize },
    #[error("layer selection is empty")]
    EmptyLayerSelection,
    #[error("layer {layer_id} is not recorded in this trace")]
    UnknownLayer { layer_id: usize },
    #[error("distributions are not aligned: {left} vs {right} entries")]
    AlignmentError { left: usize, right: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("MissingDistribution: {0}")]
    MissingDistribution(String),
    #[error("empty input: no traces or no contributing steps")]
    EmptyInput,
    #[error("bucket_size must be >= 1")]
    InvalidBucketSize,
}

/// Subset of a trace's recorded layers to aggregate over.
///
/// `Last` is the highest recorded layer id, where attention to visual tokens
/// is most significant; `All` averages every recorded layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    All,
    Last,
    /// Model layer ids; each must be present in the trace's `layer_ids`.
    Ids(Vec<usize>),
}

impl LayerSelection {
    /// Resolves to indices into a trace's recorded-layer axis.
    pub fn resolve(&self, layer_ids: &[usize]) -> Result<Vec<usize>, MetricsError> {
        match self {
            LayerSelection::All => Ok((0..layer_ids.len()).collect()),
            LayerSelection::Last => match layer_ids.len() {
                0 => Err(MetricsError::EmptyLayerSelection),
                len => Ok(vec![len - 1]),
            },
            LayerSelection::Ids(ids) => {
                if ids.is_empty() {
                    return Err(MetricsError::EmptyLayerSelection);
                }
                ids.iter()
                    .map(|id| {
                        layer_ids
                            .iter()
                            .position(|rec| rec == id)
                            .ok_or(MetricsError::UnknownLayer { layer_id: *id })
                    })
                    .collect()
            }
        }
    }
}

/// Mean attention from one step to the visual tokens over the given recorded
/// layer indices, normalized by the number of strictly positive entries.
pub fn attn_visual_step<S: Scalar>(
    step: &AttentionStep<S>,
    layer_indices: &[usize],
) -> Result<S, MetricsError> {
    if layer_indices.is_empty() {
        return Err(MetricsError::EmptyLayerSelection);
    }
    let mut total = S::zero();
    let mut positive = 0usize;
    for &layer in layer_indices {
        for &weight in &step.attn[layer] {
            total = total + weight;
            if weight > S::zero() {
                positive += 1;
            }
        }
    }
    if positive == 0 {
        return Err(MetricsError::DegenerateAttention { n: step.n });
    }
    Ok(total / scalar_from_usize(positive))
}

/// Total attention from the `n`-th response token to the visual tokens,
/// summed over the selected layers and divided by the count of strictly
/// positive entries.
pub fn attn_visual<S: Scalar>(
    trace: &AttentionTrace<S>,
    n: usize,
    layers: &LayerSelection,
) -> Result<S, MetricsError> {
    let step = trace.step_at(n).ok_or(MetricsError::MissingStep { n })?;
    let indices = layers.resolve(&trace.layer_ids)?;
    attn_visual_step(step, &indices)
}

/// Hellinger distance between two aligned probability vectors.
///
/// Returns `2^(-1/2) * sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2)`, a symmetric
/// distance in `[0, 1]` that reaches 1 exactly on disjoint supports.
pub fn hellinger<S: Scalar>(p: &[S], q: &[S]) -> Result<S, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::AlignmentError {
            left: p.len(),
            right: q.len(),
        });
    }
    for (name, probs) in [("p", p), ("q", q)] {
        let mut sum = S::zero();
        for v in probs {
            if *v < S::zero() {
                return Err(MetricsError::InvalidDistribution(format!(
                    "{name} has a negative entry"
                )));
            }
            sum = sum + *v;
        }
        if (sum - S::one()).abs() > scalar(PROB_SUM_TOLERANCE) {
            return Err(MetricsError::InvalidDistribution(format!(
                "{name} sums to {sum}, expected 1.0 within 1e-6"
            )));
        }
    }
    let mut acc = S::zero();
    for (a, b) in p.iter().zip(q) {
        let d = a.sqrt() - b.sqrt();
        acc = acc + d * d;
    }
    let dist = acc.sqrt() / scalar::<S>(2.0).sqrt();
    // Guard rounding just past 1.0 on disjoint supports.
    Ok(if dist > S::one() { S::one() } else { dist })
}

/// Visual dependency measure for one step: the Hellinger distance between
/// the recorded next-token distributions with and without visual tokens.
pub fn vdm<S: Scalar>(step: &AttentionStep<S>) -> Result<S, MetricsError> {
    let pair = step.dist_pair.as_ref().ok_or_else(|| {
        MetricsError::MissingDistribution(format!("no distribution pair at position {}", step.n))
    })?;
    hellinger(&pair.with_visual, &pair.without_visual)
}

/// Which per-step metric a decay curve aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMetric {
    VisualAttention,
    VisualDependency,
}

/// Confidence-band computation for a decay curve.
#[derive(Debug, Clone, PartialEq)]
pub enum CiSpec {
    None,
    /// Percentile bootstrap over per-sample bucket means. The seed makes the
    /// resampling reproducible.
    Bootstrap {
        resamples: usize,
        level: f64,
        seed: u64,
    },
}

impl CiSpec {
    pub fn default_bootstrap(seed: u64) -> Self {
        CiSpec::Bootstrap {
            resamples: 1000,
            level: 0.95,
            seed,
        }
    }
}

/// Metric-versus-position aggregate over a fleet of traces: the analysis
/// form behind attention- and dependency-decay plots.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve<S> {
    /// Midpoint of each bucket's position range, strictly increasing.
    pub bucket_centers: Vec<S>,
    pub mean: Vec<S>,
    pub ci_low: Vec<S>,
    pub ci_high: Vec<S>,
    /// Number of traces contributing to each bucket.
    pub n_samples: Vec<usize>,
}

impl<S: Scalar> DecayCurve<S> {
    pub fn len(&self) -> usize {
        self.bucket_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bucket_centers.is_empty()
    }
}

/// Groups per-step metric values into position buckets of `bucket_size`
/// (bucket index `floor((n-1)/bucket_size)`) across all traces and emits the
/// per-bucket mean. Buckets with no contributions are omitted. Steps whose
/// metric is undefined (all-zero attention, or a missing distribution pair
/// under `VisualDependency`) are skipped.
pub fn decay_curve<S: Scalar>(
    traces: &[AttentionTrace<S>],
    metric: CurveMetric,
    layers: &LayerSelection,
    bucket_size: usize,
    ci: &CiSpec,
) -> Result<DecayCurve<S>, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if bucket_size == 0 {
        return Err(MetricsError::InvalidBucketSize);
    }

    // bucket index -> (pooled sum, pooled count, per-trace means)
    let mut buckets: std::collections::BTreeMap<usize, (S, usize, Vec<S>)> =
        std::collections::BTreeMap::new();
    let mut saw_dist_pair = false;

    for trace in traces {
        let indices = layers.resolve(&trace.layer_ids)?;
        let mut local: std::collections::BTreeMap<usize, (S, usize)> =
            std::collections::BTreeMap::new();
        for step in &trace.steps {
            let value = match metric {
                CurveMetric::VisualAttention => match attn_visual_step(step, &indices) {
                    Ok(v) => v,
                    Err(MetricsError::DegenerateAttention { .. }) => continue,
                    Err(other) => return Err(other),
                },
                CurveMetric::VisualDependency => {
                    if step.dist_pair.is_none() {
                        continue;
                    }
                    saw_dist_pair = true;
                    vdm(step)?
                }
            };
            let bucket = (step.n - 1) / bucket_size;
            let slot = local.entry(bucket).or_insert((S::zero(), 0));
            slot.0 = slot.0 + value;
            slot.1 += 1;
        }
        for (bucket, (sum, count)) in local {
            let entry = buckets
                .entry(bucket)
                .or_insert((S::zero(), 0, Vec::new()));
            entry.0 = entry.0 + sum;
            entry.1 += count;
            entry.2.push(sum / scalar_from_usize(count));
        }
    }

    if metric == CurveMetric::VisualDependency && !saw_dist_pair {
        return Err(MetricsError::MissingDistribution(
            "no trace carries distribution pairs".into(),
        ));
    }
    if buckets.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let mut curve = DecayCurve {
        bucket_centers: Vec::with_capacity(buckets.len()),
        mean: Vec::with_capacity(buckets.len()),
        ci_low: Vec::with_capacity(buckets.len()),
        ci_high: Vec::with_capacity(buckets.len()),
        n_samples: Vec::with_capacity(buckets.len()),
    };

    let mut rng = match ci {
        CiSpec::Bootstrap { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        CiSpec::None => None,
    };

    for (bucket, (sum, count, sample_means)) in buckets {
        let center =
            scalar::<S>((bucket * bucket_size) as f64) + scalar::<S>((bucket_size as f64 + 1.0) / 2.0);
        let mean = sum / scalar_from_usize(count);
        let (mut lo, mut hi) = match ci {
            CiSpec::None => (mean, mean),
            CiSpec::Bootstrap {
                resamples, level, ..
            } => percentile_band(
                &sample_means,
                *resamples,
                *level,
                rng.as_mut().expect("rng present for bootstrap"),
            ),
        };
        // The curve's contract is ci_low <= mean <= ci_high per bucket; the
        // pooled mean weights traces by step count while the band resamples
        // per-trace means, so widen the band when the two statistics diverge.
        if lo > mean {
            lo = mean;
        }
        if hi < mean {
            hi = mean;
        }
        curve.bucket_centers.push(center);
        curve.mean.push(mean);
        curve.ci_low.push(lo);
        curve.ci_high.push(hi);
        curve.n_samples.push(sample_means.len());
    }
    Ok(curve)
}

fn percentile_band<S: Scalar>(
    values: &[S],
    resamples: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> (S, S) {
    if values.len() == 1 || resamples == 0 {
        return (values[0], values[0]);
    }
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = S::zero();
        for _ in 0..values.len() {
            sum = sum + values[rng.random_range(0..values.len())];
        }
        means.push(sum / scalar_from_usize(values.len()));
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap means are ordered"));
    let alpha = (1.0 - level) / 2.0;
    (
        percentile_sorted(&means, alpha),
        percentile_sorted(&means, 1.0 - alpha),
    )
}

fn percentile_sorted<S: Scalar>(sorted: &[S], q: f64) -> S {
    let rank = q * (sorted.len() - 1) as f64;
    let lower = rank.floor() as usize;
    let upper = rank.ceil() as usize;
    if lower == upper {
        sorted[lower]
    } else {
        let frac = scalar::<S>(rank - lower as f64);
        sorted[lower] + (sorted[upper] - sorted[lower]) * frac
    }
}

/// Serializes a curve as CSV with a fixed header, one row per bucket in
/// center order.
pub fn export_curve_csv<S: Scalar>(curve: &DecayCurve<S>) -> String {
    let mut out = String::from("bucket_center,mean,ci_low,ci_high,n_samples\n");
    for i in 0..curve.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            curve.bucket_centers[i],
            curve.mean[i],
            curve.ci_low[i],
            curve.ci_high[i],
            curve.n_samples[i]
        ));
    }
    out
}
