//! Independent oracles for the loss formulas: direct transcriptions of
//! the negative-loss sum and the normalized-negative gradient, a grid
//! oracle for the loss ceiling, and finite-difference sweeps over every
//! kernel. The transcriptions here are deliberately written from scratch
//! (naive loops, no shared helpers) so they cannot inherit a bug from the
//! implementation they check.

use anl_core::framework::{eval_nlf, eval_nnlf, eval_normalized, per_sample_eval_raw};
use anl_core::loss::{eval_base_loss, loss_constant_a, BaseLossKind};
use anl_core::prob::{clip_probs, ProbVector};
use anl_core::rng::SplitMix64;
use anl_core::verify::{finite_diff_base, finite_diff_framework, random_interior_prob, FD_MARGIN};
use anl_core::FrameworkLossSpec;

const P_MIN: f64 = 1e-7;

fn random_clipped(rng: &mut SplitMix64, k: usize) -> ProbVector {
    clip_probs(&ProbVector::new(rng.simplex_point(k)).unwrap(), P_MIN).unwrap()
}

/// Naive transcription of the negative loss: sum over classes of
/// (1 - q_k) * (A - L(p, k)) with q one-hot at y and L the CE kernel.
fn nlf_ce_direct(a: f64, p: &[f64], y: usize) -> f64 {
    let mut total = 0.0;
    for (k, &p_k) in p.iter().enumerate() {
        let q_k = if k == y { 1.0 } else { 0.0 };
        let loss_k = -p_k.ln();
        total += (1.0 - q_k) * (a - loss_k);
    }
    total
}

/// Naive transcription of the normalized negative cross entropy gradient:
/// off-label entries get (1/p_j) * (A + log p_y) / (sum_k A + log p_k)^2,
/// the labeled entry -(1/p_y) * (sum_{k!=y} A + log p_k) / (same square).
fn nnce_grad_direct(a: f64, p: &[f64], y: usize) -> Vec<f64> {
    let denom: f64 = p.iter().map(|&p_k| a + p_k.ln()).sum();
    let denom_sq = denom * denom;
    let mut grad = Vec::with_capacity(p.len());
    for (j, &p_j) in p.iter().enumerate() {
        if j == y {
            let off_sum: f64 = p
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != y)
                .map(|(_, &p_k)| a + p_k.ln())
                .sum();
            grad.push(-(1.0 / p_j) * off_sum / denom_sq);
        } else {
            grad.push((1.0 / p_j) * (a + p[y].ln()) / denom_sq);
        }
    }
    grad
}

/// Dense grid plus local refinement for the maximum of the active
/// per-class loss over [p_min, 1].
fn ceiling_grid_oracle(gamma: Option<f64>, p_min: f64) -> f64 {
    let f = |p: f64| -> f64 {
        match gamma {
            None => -p.ln(),
            Some(g) => (1.0 - p).powf(g) * -p.ln(),
        }
    };
    // Log-spaced dense grid, then golden-section refinement around the
    // best cell.
    let steps = 20_000usize;
    let lo = p_min.ln();
    let hi = 0.0f64;
    let mut best_idx = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        let p = (lo + (hi - lo) * i as f64 / steps as f64).exp();
        let v = f(p.min(1.0));
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    let mut a = (lo + (hi - lo) * best_idx.saturating_sub(1) as f64 / steps as f64).exp();
    let mut b = (lo + (hi - lo) * (best_idx + 1).min(steps) as f64 / steps as f64).exp();
    a = a.max(p_min);
    b = b.min(1.0);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    f(0.5 * (a + b)).max(best)
}

#[test]
fn ceiling_matches_grid_oracle_for_ce() {
    for p_min in [1e-7, 1e-3] {
        let analytic = loss_constant_a(&BaseLossKind::Ce, p_min).unwrap();
        let oracle = ceiling_grid_oracle(None, p_min);
        assert!(
            (analytic - oracle).abs() <= 1e-6 * analytic,
            "p_min={p_min}: {analytic} vs {oracle}"
        );
    }
    assert!((loss_constant_a(&BaseLossKind::Ce, 1e-7).unwrap() - 16.11809565095832).abs() < 1e-10);
}

#[test]
fn ceiling_matches_grid_oracle_for_fl() {
    for gamma in [0.5, 1.0, 2.0] {
        let analytic = loss_constant_a(&BaseLossKind::fl(gamma), 1e-7).unwrap();
        let oracle = ceiling_grid_oracle(Some(gamma), 1e-7);
        assert!(
            (analytic - oracle).abs() <= 1e-6 * analytic,
            "gamma={gamma}: {analytic} vs {oracle}"
        );
    }
    // The maximum sits at the floor, so for gamma = 0.5 the value is a
    // hair below the CE ceiling.
    let fl = loss_constant_a(&BaseLossKind::fl(0.5), 1e-7).unwrap();
    assert!((fl - 16.118094845053516).abs() < 1e-12, "{fl}");
}

#[test]
fn nlf_matches_direct_transcription() {
    let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
    let mut rng = SplitMix64::new(41);
    for _ in 0..200 {
        let p = random_clipped(&mut rng, 5);
        let y = rng.below(5);
        let eval = eval_nlf(&BaseLossKind::Ce, a, &p, y).unwrap();
        let direct = nlf_ce_direct(a, p.values(), y);
        assert!(
            (eval.value - direct).abs() < 1e-10,
            "value {} vs direct {direct}",
            eval.value
        );
    }
}

#[test]
fn nnce_gradient_matches_direct_transcription() {
    let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
    let mut rng = SplitMix64::new(43);
    for _ in 0..500 {
        let k = 2 + rng.below(9);
        let p = random_clipped(&mut rng, k);
        let y = rng.below(k);
        let analytic = eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().grad_p;
        let direct = nnce_grad_direct(a, p.values(), y);
        for (j, (&g, &d)) in analytic.iter().zip(&direct).enumerate() {
            assert!(
                (g - d).abs() <= 1e-10 * d.abs().max(1.0),
                "k={k} y={y} j={j}: {g} vs {d}"
            );
        }
    }
}

#[test]
fn nnce_gradient_ordering_on_fixed_point() {
    // With p = [0.7, 0.2, 0.1] and the label at 0, the smaller off-label
    // probability (class 2) must receive the larger gradient.
    let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
    let p = ProbVector::new(vec![0.7, 0.2, 0.1]).unwrap();
    let grad = eval_nnlf(&BaseLossKind::Ce, a, &p, 0).unwrap().grad_p;
    let direct = nnce_grad_direct(a, p.values(), 0);
    assert!(grad[2] > grad[1], "grad {grad:?}");
    assert!(direct[2] > direct[1]);
    assert!(grad[1] > 0.0 && grad[2] > 0.0);
    assert!(grad[0] < 0.0);
}

#[test]
fn finite_differences_validate_every_base_kernel() {
    let kinds = [
        BaseLossKind::Ce,
        BaseLossKind::fl(0.5),
        BaseLossKind::fl(2.0),
        BaseLossKind::Mae,
        BaseLossKind::gce(0.7),
        BaseLossKind::rce_default(),
        BaseLossKind::sce(0.1, 1.0),
    ];
    let mut rng = SplitMix64::new(47);
    let h = 1e-6;
    for kind in &kinds {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let k = 2 + rng.below(9);
            let p = random_interior_prob(&mut rng, k, P_MIN, FD_MARGIN).unwrap();
            let y = rng.below(k);
            let analytic = eval_base_loss(kind, &p, y).unwrap().grad_p;
            let fd = finite_diff_base(kind, &p, y, h).unwrap();
            for (&a, &b) in analytic.iter().zip(&fd) {
                worst = worst.max(anl_core::numeric::rel_err(a, b));
            }
        }
        assert!(worst < 1e-4, "{}: worst rel err {worst}", kind.name());
    }
}

#[test]
fn finite_differences_validate_framework_losses() {
    let specs = [
        FrameworkLossSpec::normalized_only(BaseLossKind::Ce, 1.0, P_MIN).unwrap(),
        FrameworkLossSpec::normalized_only(BaseLossKind::fl(0.5), 1.0, P_MIN).unwrap(),
        FrameworkLossSpec::nnlf_only(BaseLossKind::Ce, 1.0, P_MIN).unwrap(),
        FrameworkLossSpec::nnlf_only(BaseLossKind::fl(0.5), 1.0, P_MIN).unwrap(),
        FrameworkLossSpec::apl(
            BaseLossKind::Ce,
            BaseLossKind::rce_default(),
            1.0,
            1.0,
            P_MIN,
        )
        .unwrap(),
        FrameworkLossSpec::anl(BaseLossKind::Ce, 5.0, 5.0, P_MIN).unwrap(),
        FrameworkLossSpec::anl(BaseLossKind::fl(0.5), 5.0, 5.0, P_MIN).unwrap(),
    ];
    let mut rng = SplitMix64::new(53);
    let h = 1e-6;
    for spec in &specs {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let k = 2 + rng.below(9);
            let p = random_interior_prob(&mut rng, k, P_MIN, FD_MARGIN).unwrap();
            let y = rng.below(k);
            let analytic = per_sample_eval_raw(spec, p.values(), y).unwrap().grad_p;
            let fd = finite_diff_framework(spec, &p, y, h).unwrap();
            for (&a, &b) in analytic.iter().zip(&fd) {
                worst = worst.max(anl_core::numeric::rel_err(a, b));
            }
        }
        assert!(worst < 1e-4, "{}: worst rel err {worst}", spec.label());
    }
}

#[test]
fn normalized_value_is_a_share_of_the_class_sum() {
    // Quotient structure: N/D recomputed with naive loops.
    let mut rng = SplitMix64::new(59);
    for _ in 0..200 {
        let k = 2 + rng.below(9);
        let p = random_clipped(&mut rng, k);
        let y = rng.below(k);
        let eval = eval_normalized(&BaseLossKind::Ce, &p, y).unwrap();
        let numer = -p.get(y).ln();
        let denom: f64 = p.values().iter().map(|&v| -v.ln()).sum();
        assert!((eval.value - numer / denom).abs() < 1e-12);
    }
}
