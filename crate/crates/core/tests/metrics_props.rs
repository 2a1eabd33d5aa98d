//! Property tests for the metric kernels against independent oracles.

mod common;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_distribution, random_trace, TraceShape};
use reflect_core::metrics::{
    attn_visual, decay_curve, hellinger, vdm, CiSpec, CurveMetric, LayerSelection, MetricsError,
};
use reflect_core::trace::AttentionTrace;

/// Independent oracle for the positive-entry-normalized attention mean:
/// a plain triple loop, no shared code with the implementation.
fn brute_force_attn(
    trace: &AttentionTrace<f64>,
    n: usize,
    layer_indices: &[usize],
) -> Option<f64> {
    let step = trace.steps.iter().find(|s| s.n == n)?;
    let mut numerator = 0.0;
    let mut positives = 0u64;
    for &layer in layer_indices {
        for j in 0..trace.partition.num_visual_tokens() {
            let w = step.attn[layer][j];
            numerator += w;
            if w > 0.0 {
                positives += 1;
            }
        }
    }
    if positives == 0 {
        None
    } else {
        Some(numerator / positives as f64)
    }
}

#[test]
fn attn_visual_matches_brute_force_on_random_traces() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa77);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let trace = random_trace(&mut rng, &TraceShape::default());
        // Random non-empty subset of recorded layers.
        let subset: Vec<usize> = trace
            .layer_ids
            .iter()
            .copied()
            .filter(|_| rng.random_range(0.0..1.0) < 0.6)
            .collect();
        let selection = if subset.is_empty() {
            LayerSelection::All
        } else {
            LayerSelection::Ids(subset)
        };
        let indices = selection.resolve(&trace.layer_ids).unwrap();
        for step in &trace.steps {
            let expected = brute_force_attn(&trace, step.n, &indices);
            match (attn_visual(&trace, step.n, &selection), expected) {
                (Ok(got), Some(want)) => {
                    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
                    checked += 1;
                }
                (Err(MetricsError::DegenerateAttention { .. }), None) => checked += 1,
                (got, want) => panic!("divergence: {got:?} vs {want:?}"),
            }
        }
    }
    assert!(checked > 1000, "exercised {checked} comparisons");
}

proptest! {
    #[test]
    fn hellinger_symmetry_and_range(seed in any::<u64>(), len in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, len);
        let q = random_distribution(&mut rng, len);
        let pq = hellinger(&p, &q).unwrap();
        let qp = hellinger(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        // Strictly positive whenever the distributions differ anywhere.
        if p.iter().zip(&q).any(|(a, b)| a != b) {
            prop_assert!(pq > 0.0);
        }
    }

    #[test]
    fn hellinger_is_permutation_invariant(seed in any::<u64>(), len in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, len);
        let q = random_distribution(&mut rng, len);
        let base = hellinger(&p, &q).unwrap();
        // Rotate both supports by the same offset.
        for offset in 1..len {
            let rp: Vec<f64> = (0..len).map(|i| p[(i + offset) % len]).collect();
            let rq: Vec<f64> = (0..len).map(|i| q[(i + offset) % len]).collect();
            let rotated = hellinger(&rp, &rq).unwrap();
            prop_assert!((rotated - base).abs() < 1e-12);
        }
    }
}

#[test]
fn vdm_zero_for_equal_distributions_any_support_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for len in 2..20 {
        let probs = random_distribution(&mut rng, len);
        let mut trace = random_trace(
            &mut rng,
            &TraceShape {
                dist_pair_prob: 1.0,
                ..TraceShape::default()
            },
        );
        let pair = trace.steps[0].dist_pair.as_mut().unwrap();
        pair.support_ids = (0..len as i64 - 1).chain([-1]).collect();
        pair.with_visual = probs.clone();
        pair.without_visual = probs;
        assert_eq!(vdm(&trace.steps[0]).unwrap(), 0.0);
    }
}

#[test]
fn decay_curve_means_match_flat_reaggregation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdeca);
    for _ in 0..50 {
        let traces: Vec<AttentionTrace<f64>> = (0..rng.random_range(1..6usize))
            .map(|_| random_trace(&mut rng, &TraceShape::default()))
            .collect();
        let bucket_size = rng.random_range(1..=25usize);
        let curve = match decay_curve(
            &traces,
            CurveMetric::VisualAttention,
            &LayerSelection::All,
            bucket_size,
            &CiSpec::None,
        ) {
            Ok(curve) => curve,
            Err(MetricsError::EmptyInput) => continue,
            Err(other) => panic!("{other}"),
        };

        // Oracle: pool every defined (step, value) by bucket and average.
        let mut pooled: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for trace in &traces {
            let all: Vec<usize> = (0..trace.layer_ids.len()).collect();
            for step in &trace.steps {
                if let Some(v) = brute_force_attn(trace, step.n, &all) {
                    pooled.entry((step.n - 1) / bucket_size).or_default().push(v);
                }
            }
        }
        let expected: Vec<f64> = pooled
            .values()
            .map(|vs| vs.iter().sum::<f64>() / vs.len() as f64)
            .collect();
        assert_eq!(curve.len(), expected.len());
        for (got, want) in curve.mean.iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn bootstrap_bands_contain_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb00);
    for round in 0..20 {
        let traces: Vec<AttentionTrace<f64>> = (0..rng.random_range(2..8usize))
            .map(|_| {
                random_trace(
                    &mut rng,
                    &TraceShape {
                        min_len: 5,
                        max_len: 80,
                        ..TraceShape::default()
                    },
                )
            })
            .collect();
        let curve = match decay_curve(
            &traces,
            CurveMetric::VisualAttention,
            &LayerSelection::All,
            10,
            &CiSpec::Bootstrap {
                resamples: 300,
                level: 0.95,
                seed: round,
            },
        ) {
            Ok(curve) => curve,
            Err(MetricsError::EmptyInput) => continue,
            Err(other) => panic!("{other}"),
        };
        for i in 0..curve.len() {
            assert!(
                curve.ci_low[i] <= curve.mean[i] && curve.mean[i] <= curve.ci_high[i],
                "bucket {i}: [{}, {}] vs mean {}",
                curve.ci_low[i],
                curve.ci_high[i],
                curve.mean[i]
            );
        }
    }
}
