//! Property tests for the simplex primitives and the loss-family
//! invariants: shift invariance and normalization of softmax, clip
//! idempotence, class-sum symmetry, boundedness, the negative-loss scale
//! identity, monotonicity of the active kernels, and the affine
//! noisy-risk identity.

use proptest::prelude::*;

use anl_core::framework::{eval_nlf, eval_nnlf, eval_normalized};
use anl_core::loss::{eval_base_loss, loss_constant_a, BaseLossKind};
use anl_core::noise::{build_transition, NoiseSpec};
use anl_core::prob::{clip_probs, softmax, ProbVector};

const P_MIN: f64 = 1e-7;

/// Strategy: a clipped probability vector with k in [2, 12].
fn clipped_prob() -> impl Strategy<Value = ProbVector> {
    (2usize..=12)
        .prop_flat_map(|k| proptest::collection::vec(1e-6f64..1.0, k))
        .prop_map(|raw| {
            let sum: f64 = raw.iter().sum();
            let values: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
            clip_probs(&ProbVector::new(values).unwrap(), P_MIN).unwrap()
        })
}

// Bounded so the logit gap stays under ~700: beyond that, exp underflows
// to exactly zero and strict positivity can't hold in f64 (which is the
// reason the probability floor exists).
fn finite_logits() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=12).prop_flat_map(|k| proptest::collection::vec(-350.0f64..350.0, k))
}

proptest! {
    #[test]
    fn softmax_is_positive_and_normalized(logits in finite_logits()) {
        let p = softmax(&logits).unwrap();
        prop_assert!(p.values().iter().all(|&v| v > 0.0));
        let sum: f64 = p.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant(logits in finite_logits(), c in -2000.0f64..2000.0) {
        let p = softmax(&logits).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_is_idempotent(p in clipped_prob()) {
        let once = clip_probs(&p, P_MIN).unwrap();
        let twice = clip_probs(&once, P_MIN).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn nnlf_class_sum_is_k_minus_one(p in clipped_prob()) {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let k = p.len();
        let sum: f64 = (0..k)
            .map(|y| eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value)
            .sum();
        let expected = (k - 1) as f64;
        prop_assert!((sum - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn nnlf_and_normalized_stay_in_unit_interval(p in clipped_prob()) {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        for y in 0..p.len() {
            let nn = eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&nn), "nn = {}", nn);
            let norm = eval_normalized(&BaseLossKind::Ce, &p, y).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&norm), "norm = {}", norm);
        }
    }

    /// The unnormalized negative loss relates to the normalized one by
    /// the class-sum scale: NLF / sum_k (A - L_k) = 1 - (A - L_y) / sum.
    #[test]
    fn nlf_scale_identity(p in clipped_prob(), y_pick in 0usize..12) {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let y = y_pick % p.len();
        let nlf = eval_nlf(&BaseLossKind::Ce, a, &p, y).unwrap().value;
        let denom: f64 = p.values().iter().map(|&v| a + v.ln()).sum();
        let nnlf = eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value;
        prop_assert!((nlf / denom - nnlf).abs() < 1e-10);
    }

    /// MAE equals twice the missing label probability on simplex points.
    #[test]
    fn mae_is_twice_the_label_deficit(p in clipped_prob(), y_pick in 0usize..12) {
        let y = y_pick % p.len();
        let eval = eval_base_loss(&BaseLossKind::Mae, &p, y).unwrap();
        // Clipping inflates the sum by at most K * p_min.
        let slack = 2.0 * p.len() as f64 * P_MIN + 1e-12;
        prop_assert!((eval.value - 2.0 * (1.0 - p.get(y))).abs() <= slack);
    }

    /// Exact affine identity for the symmetric loss under symmetric
    /// noise, on arbitrary clipped points.
    #[test]
    fn affine_noisy_risk_identity(p in clipped_prob(), y_pick in 0usize..12, eta in 0.0f64..0.85) {
        let k = p.len();
        prop_assume!(eta < (k as f64 - 1.0) / k as f64);
        let y = y_pick % k;
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let spec = NoiseSpec::symmetric(eta, 0);
        let t = build_transition(&spec, k).unwrap();
        let clean = eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value;
        let mut noisy = 0.0;
        for (j, &w) in t.row(y).iter().enumerate() {
            noisy += w * eval_nnlf(&BaseLossKind::Ce, a, &p, j).unwrap().value;
        }
        let slope = 1.0 - eta * k as f64 / (k as f64 - 1.0);
        prop_assert!((noisy - (slope * clean + eta)).abs() < 1e-10);
    }
}

/// Active kernels are nonincreasing in the label probability when the
/// off-label mass keeps its proportions. Checked on constructed monotone
/// families rather than random pairs.
#[test]
fn active_kernels_decrease_in_label_probability() {
    let kinds = [
        BaseLossKind::Ce,
        BaseLossKind::fl(0.5),
        BaseLossKind::gce(0.7),
    ];
    let off_ratios = [1.0, 2.0, 5.0, 1.0]; // fixed off-label proportions
    for kind in &kinds {
        let mut previous: Option<f64> = None;
        for step in 1..40 {
            let p_y = step as f64 / 40.0;
            let rest: f64 = 1.0 - p_y;
            let ratio_sum: f64 = off_ratios.iter().sum();
            let mut values = vec![0.0; 5];
            values[0] = p_y;
            for (slot, r) in values[1..].iter_mut().zip(&off_ratios) {
                *slot = rest * r / ratio_sum;
            }
            let p = clip_probs(&ProbVector::new(values).unwrap(), P_MIN).unwrap();
            let value = eval_base_loss(kind, &p, 0).unwrap().value;
            if let Some(prev) = previous {
                assert!(
                    value <= prev + 1e-12,
                    "{} increased from {prev} to {value} at p_y={p_y}",
                    kind.name()
                );
            }
            previous = Some(value);
        }
    }
}

/// The normalized forms keep the same monotone direction on the same
/// families.
#[test]
fn normalized_kernels_decrease_in_label_probability() {
    for kind in [BaseLossKind::Ce, BaseLossKind::fl(0.5)] {
        let mut previous: Option<f64> = None;
        for step in 1..40 {
            let p_y = step as f64 / 40.0;
            let rest = (1.0 - p_y) / 3.0;
            let p = clip_probs(
                &ProbVector::new(vec![p_y, rest, rest, rest]).unwrap(),
                P_MIN,
            )
            .unwrap();
            let value = eval_normalized(&kind, &p, 0).unwrap().value;
            if let Some(prev) = previous {
                assert!(value <= prev + 1e-12);
            }
            previous = Some(value);
        }
    }
}
