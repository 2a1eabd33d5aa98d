//! Property tests for the visual-attention reward against a raw-JSON oracle.

mod common;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::{random_trace, TraceShape};
use reflect_core::reward::{
    overall_reward, visual_attention_reward, RewardError,
};
use reflect_core::trace::{write_trace_string, AttentionTrace};

/// What the reward should be for a correct rollout, re-derived directly from
/// the serialized JSON document with no shared code.
#[derive(Debug, PartialEq)]
enum OracleOutcome {
    Value(f64),
    MissingFirstHalf,
    MissingSecondHalf,
    ZeroDenominator,
}

fn brute_force_r_v(doc: &Value) -> OracleOutcome {
    let response_len = doc["partition"]["response_len"].as_u64().unwrap() as usize;
    let num_layers = doc["layer_ids"].as_array().unwrap().len();
    let steps = doc["steps"].as_array().unwrap();

    let mut first_seen = false;
    let mut second_seen = false;
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for step in steps {
        let n = step["n"].as_u64().unwrap() as usize;
        if 2 * n == response_len {
            continue;
        }
        let last_row = step["attn"].as_array().unwrap()[num_layers - 1]
            .as_array()
            .unwrap();
        let mut sum = 0.0;
        let mut positives = 0u64;
        for w in last_row {
            let w = w.as_f64().unwrap();
            sum += w;
            if w > 0.0 {
                positives += 1;
            }
        }
        let value = if positives == 0 { 0.0 } else { sum / positives as f64 };
        if 2 * n < response_len {
            first_seen = true;
            denominator += value;
        } else {
            second_seen = true;
            numerator += value;
        }
    }
    if !first_seen {
        return OracleOutcome::MissingFirstHalf;
    }
    if !second_seen {
        return OracleOutcome::MissingSecondHalf;
    }
    if denominator <= 0.0 {
        return OracleOutcome::ZeroDenominator;
    }
    OracleOutcome::Value(numerator / denominator)
}

#[test]
fn r_v_matches_raw_json_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e4);
    let shape = TraceShape {
        min_len: 2,
        max_len: 50,
        ..TraceShape::default()
    };
    let mut values = 0usize;
    let mut degenerates = 0usize;
    for _ in 0..1000 {
        let trace = random_trace(&mut rng, &shape);
        let doc: Value = serde_json::from_str(&write_trace_string(&trace).unwrap()).unwrap();
        let expected = brute_force_r_v(&doc);
        match (visual_attention_reward(&trace, 1), expected) {
            (Ok(got), OracleOutcome::Value(want)) => {
                let scale = want.abs().max(1.0);
                assert!((got - want).abs() <= 1e-12 * scale, "{got} vs {want}");
                values += 1;
            }
            (
                Err(RewardError::DegenerateHalf { half: "first" }),
                OracleOutcome::MissingFirstHalf,
            )
            | (
                Err(RewardError::DegenerateHalf { half: "second" }),
                OracleOutcome::MissingSecondHalf,
            )
            | (Err(RewardError::DegenerateAttention), OracleOutcome::ZeroDenominator) => {
                degenerates += 1
            }
            (got, want) => panic!("divergence: {got:?} vs {want:?}"),
        }
    }
    assert!(values >= 300, "only {values} non-degenerate cases");
    assert!(degenerates > 0, "random shapes should hit degenerate cases");
}

#[test]
fn r_v_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
    let shape = TraceShape {
        min_len: 4,
        max_len: 40,
        zero_weight_prob: 0.0,
        ..TraceShape::default()
    };
    let mut checked = 0usize;
    for _ in 0..300 {
        let trace = random_trace(&mut rng, &shape);
        let base = match visual_attention_reward(&trace, 1) {
            Ok(v) => v,
            Err(_) => continue,
        };
        // Shrinking keeps every weight inside [0,1]; positive-entry counts
        // are unchanged for any c > 0.
        let c = rng.random_range(0.01..1.0);
        let mut scaled = trace.clone();
        for step in &mut scaled.steps {
            for row in &mut step.attn {
                for w in row {
                    *w *= c;
                }
            }
        }
        let after = visual_attention_reward(&scaled, 1).unwrap();
        let scale = base.abs().max(1.0);
        assert!((after - base).abs() <= 1e-12 * scale, "{after} vs {base}");
        checked += 1;
    }
    assert!(checked >= 100, "exercised {checked} scaled traces");
}

#[test]
fn r_v_strictly_increases_with_second_half_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x303);
    let shape = TraceShape {
        min_len: 4,
        max_len: 40,
        zero_weight_prob: 0.0,
        ..TraceShape::default()
    };
    let mut checked = 0usize;
    for _ in 0..300 {
        let mut trace = random_trace(&mut rng, &shape);
        // Halve every weight up front so a 1.5x bump stays inside [0,1].
        for step in &mut trace.steps {
            for row in &mut step.attn {
                for w in row {
                    *w *= 0.5;
                }
            }
        }
        let base = match visual_attention_reward(&trace, 1) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let response_len = trace.partition.response_len;
        let Some(target) = trace
            .steps
            .iter()
            .position(|s| 2 * s.n > response_len)
        else {
            continue;
        };
        // Scaling one second-half step's weights scales that step's
        // attention value while leaving the first half untouched.
        let last = trace.layer_ids.len() - 1;
        for w in &mut trace.steps[target].attn[last] {
            *w *= 1.5;
        }
        let bumped = visual_attention_reward(&trace, 1).unwrap();
        assert!(bumped > base, "{bumped} should exceed {base}");
        checked += 1;
    }
    assert!(checked >= 100, "exercised {checked} bumps");
}

#[test]
fn r_a_zero_forces_r_v_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xaa);
    for _ in 0..100 {
        let trace = random_trace(&mut rng, &TraceShape::default());
        assert_eq!(visual_attention_reward(&trace, 0).unwrap(), 0.0);
    }
}

#[test]
fn overall_reward_is_affine_in_each_component() {
    let lambdas = [(0.5, 0.1), (1.0, 0.0), (0.25, 0.75)];
    for (lv, lf) in lambdas {
        // Finite differences in r_v at fixed (r_a, r_f).
        let h = 0.125; // exactly representable, so differences are exact
        for steps in 0..20 {
            let r_v = steps as f64 * h;
            let lo = overall_reward(1, r_v, 1, lv, lf).unwrap().r_o;
            let hi = overall_reward(1, r_v + h, 1, lv, lf).unwrap().r_o;
            assert!(((hi - lo) - lv * h).abs() < 1e-12);
        }
        // Difference in r_f at fixed others.
        let with_f = overall_reward(1, 1.0, 1, lv, lf).unwrap().r_o;
        let without_f = overall_reward(1, 1.0, 0, lv, lf).unwrap().r_o;
        assert!(((with_f - without_f) - lf).abs() < 1e-12);
        // Difference in r_a (r_v pinned to 0 to honor the precondition).
        let with_a = overall_reward(1, 0.0, 1, lv, lf).unwrap().r_o;
        let without_a = overall_reward(0, 0.0, 1, lv, lf).unwrap().r_o;
        assert!(((with_a - without_a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn breakdown_identity_holds_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d);
    for _ in 0..500 {
        let r_a = u8::from(rng.random_range(0.0..1.0) < 0.5);
        let r_v = if r_a == 1 { rng.random_range(0.0..3.0) } else { 0.0 };
        let r_f = u8::from(rng.random_range(0.0..1.0) < 0.5);
        let lv = rng.random_range(0.0..2.0);
        let lf = rng.random_range(0.0..2.0);
        let b = overall_reward(r_a, r_v, r_f, lv, lf).unwrap();
        let recomputed = f64::from(r_a) + lv * r_v + lf * f64::from(r_f);
        assert_eq!(b.r_o, recomputed, "identity must be bit-exact");
    }
}

#[test]
fn no_clamping_of_large_ratios() {
    let mut trace: AttentionTrace<f64> = random_trace(
        &mut ChaCha8Rng::seed_from_u64(1),
        &TraceShape {
            min_len: 10,
            max_len: 10,
            zero_weight_prob: 0.0,
            dist_pair_prob: 0.0,
        },
    );
    for step in &mut trace.steps {
        let small = 2 * step.n < trace.partition.response_len;
        for row in &mut step.attn {
            for w in row {
                *w = if small { 1e-6 } else { 0.9 };
            }
        }
    }
    let r_v = visual_attention_reward(&trace, 1).unwrap();
    assert!(r_v > 1000.0, "ratio should be enormous, got {r_v}");
}
