//! Shared fixtures: seeded random traces exercising sparse steps, zero
//! weights, and OTHER-bucket distribution pairs.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use reflect_core::trace::{
    AttentionStep, AttentionTrace, DistributionPair, TokenPartition, OTHER_TOKEN_ID,
};

pub struct TraceShape {
    pub min_len: usize,
    pub max_len: usize,
    pub zero_weight_prob: f64,
    pub dist_pair_prob: f64,
}

impl Default for TraceShape {
    fn default() -> Self {
        TraceShape {
            min_len: 1,
            max_len: 60,
            zero_weight_prob: 0.15,
            dist_pair_prob: 0.5,
        }
    }
}

pub fn random_trace(rng: &mut ChaCha8Rng, shape: &TraceShape) -> AttentionTrace<f64> {
    let num_layers = rng.random_range(1..=4usize);
    let num_visual = rng.random_range(1..=6usize);
    let response_len = rng.random_range(shape.min_len..=shape.max_len);

    let mut positions: Vec<usize> = (1..=response_len)
        .filter(|_| rng.random_range(0.0..1.0) < 0.7)
        .collect();
    if positions.is_empty() {
        positions.push(rng.random_range(1..=response_len));
    }

    let mut layer_ids: Vec<usize> = Vec::with_capacity(num_layers);
    let mut next = rng.random_range(0..8usize);
    for _ in 0..num_layers {
        layer_ids.push(next);
        next += rng.random_range(1..5usize);
    }

    let steps = positions
        .iter()
        .map(|&n| AttentionStep {
            n,
            attn: (0..num_layers)
                .map(|_| {
                    (0..num_visual)
                        .map(|_| {
                            if rng.random_range(0.0..1.0) < shape.zero_weight_prob {
                                0.0
                            } else {
                                rng.random_range(0.0..=1.0)
                            }
                        })
                        .collect()
                })
                .collect(),
            dist_pair: (rng.random_range(0.0..1.0) < shape.dist_pair_prob)
                .then(|| random_dist_pair(rng)),
        })
        .collect();

    AttentionTrace {
        sample_id: format!("rand-{}", rng.random_range(0..u64::MAX)),
        layer_ids,
        partition: TokenPartition {
            visual_span: (0, num_visual),
            question_span: (num_visual, num_visual + 4),
            response_start: num_visual + 4,
            response_len,
        },
        steps,
    }
}

pub fn random_dist_pair(rng: &mut ChaCha8Rng) -> DistributionPair<f64> {
    let extra = rng.random_range(1..=5usize);
    let base = rng.random_range(0..1000i64);
    let mut support_ids: Vec<i64> = (0..extra as i64).map(|i| base + i).collect();
    support_ids.push(OTHER_TOKEN_ID);
    DistributionPair {
        with_visual: random_distribution(rng, extra + 1),
        without_visual: random_distribution(rng, extra + 1),
        support_ids,
    }
}

pub fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.001..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}
