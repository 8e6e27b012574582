//! Constructions over the base kernels: normalized losses, negative loss
//! functions and their normalized form, the active/passive and
//! active/negative weighted combinations, and the batch entropy
//! regularizer.
//!
//! Conventions:
//! - The normalized negative form used everywhere is
//!   `1 - (A - L(p,y)) / sum_k (A - L(p,k))`, i.e. without the `1/(K-1)`
//!   prefactor of the raw complementary-label sum.
//! - The ceiling `A` is computed once from the active kernel and the
//!   probability floor when a spec is built, and then frozen; recomputing
//!   it per batch would silently change the loss surface.
//! - Batch losses are averaged (not summed) over the batch so the weights
//!   are batch-size independent, and batch gradients returned here are
//!   gradients of that averaged batch value.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::loss::{
    active_per_class_grad, active_per_class_value, eval_base_loss_raw, loss_constant_a,
    BaseLossKind, LossEval,
};
use crate::numeric::pairwise_sum;
use crate::prob::ProbVector;
use crate::rng::SplitMix64;

/// Slack allowed when checking that the ceiling dominates a realized
/// per-class loss; entries sitting exactly on the floor give `A - L == 0`.
const CEILING_SLACK: f64 = 1e-9;

/// How the per-sample terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// `alpha * L_norm` alone.
    NormalizedOnly,
    /// `beta * L_nn` alone.
    NnlfOnly,
    /// `alpha * L_norm(active) + beta * L(passive)`.
    Apl,
    /// `alpha * L_norm + beta * L_nn`.
    Anl,
    /// `alpha * L_norm + beta * L_nn + lambda * L_reg`.
    AnlStar,
}

/// A closed description of one framework loss, sufficient to evaluate
/// value and gradient on a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkLossSpec {
    pub active_kind: BaseLossKind,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Frozen loss ceiling for the active kernel under `floor`.
    pub a: f64,
    /// Probability floor the ceiling was computed for.
    pub floor: f64,
    pub combiner: Combiner,
    pub passive_kind: Option<BaseLossKind>,
}

impl FrameworkLossSpec {
    fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn normalized_only(active: BaseLossKind, alpha: f64, p_min: f64) -> Result<Self> {
        let a = loss_constant_a(&active, p_min)?;
        FrameworkLossSpec {
            active_kind: active,
            alpha,
            beta: 1.0,
            lambda: 0.0,
            a,
            floor: p_min,
            combiner: Combiner::NormalizedOnly,
            passive_kind: None,
        }
        .checked()
    }

    pub fn nnlf_only(active: BaseLossKind, beta: f64, p_min: f64) -> Result<Self> {
        let a = loss_constant_a(&active, p_min)?;
        FrameworkLossSpec {
            active_kind: active,
            alpha: 1.0,
            beta,
            lambda: 0.0,
            a,
            floor: p_min,
            combiner: Combiner::NnlfOnly,
            passive_kind: None,
        }
        .checked()
    }

    pub fn apl(
        active: BaseLossKind,
        passive: BaseLossKind,
        alpha: f64,
        beta: f64,
        p_min: f64,
    ) -> Result<Self> {
        let a = loss_constant_a(&active, p_min)?;
        FrameworkLossSpec {
            active_kind: active,
            alpha,
            beta,
            lambda: 0.0,
            a,
            floor: p_min,
            combiner: Combiner::Apl,
            passive_kind: Some(passive),
        }
        .checked()
    }

    pub fn anl(active: BaseLossKind, alpha: f64, beta: f64, p_min: f64) -> Result<Self> {
        let a = loss_constant_a(&active, p_min)?;
        FrameworkLossSpec {
            active_kind: active,
            alpha,
            beta,
            lambda: 0.0,
            a,
            floor: p_min,
            combiner: Combiner::Anl,
            passive_kind: None,
        }
        .checked()
    }

    pub fn anl_star(
        active: BaseLossKind,
        alpha: f64,
        beta: f64,
        lambda: f64,
        p_min: f64,
    ) -> Result<Self> {
        let a = loss_constant_a(&active, p_min)?;
        FrameworkLossSpec {
            active_kind: active,
            alpha,
            beta,
            lambda,
            a,
            floor: p_min,
            combiner: Combiner::AnlStar,
            passive_kind: None,
        }
        .checked()
    }

    pub fn validate(&self) -> Result<()> {
        self.active_kind.validate()?;
        if !self.active_kind.is_negatable_active() {
            return Err(CoreError::UnsupportedLoss(format!(
                "active kernel must be ce or fl, got {}",
                self.active_kind.name()
            )));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() || !self.lambda.is_finite() {
            return Err(CoreError::Config(
                "loss weights must be finite".to_string(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(CoreError::Config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        match self.combiner {
            Combiner::Apl | Combiner::Anl | Combiner::AnlStar => {
                if self.alpha <= 0.0 || self.beta <= 0.0 {
                    return Err(CoreError::Config(format!(
                        "alpha and beta must be positive for combined losses, got ({}, {})",
                        self.alpha, self.beta
                    )));
                }
            }
            Combiner::NormalizedOnly => {
                if self.alpha <= 0.0 {
                    return Err(CoreError::Config("alpha must be positive".to_string()));
                }
            }
            Combiner::NnlfOnly => {
                if self.beta <= 0.0 {
                    return Err(CoreError::Config("beta must be positive".to_string()));
                }
            }
        }
        if self.combiner == Combiner::Apl {
            match &self.passive_kind {
                None => {
                    return Err(CoreError::Config(
                        "active/passive combination requires a passive kernel".to_string(),
                    ))
                }
                Some(kind) => kind.validate()?,
            }
        }
        // The frozen ceiling must agree with the one the floor implies.
        let expect = loss_constant_a(&self.active_kind, self.floor)?;
        if (self.a - expect).abs() > 1e-12 * expect.abs().max(1.0) {
            return Err(CoreError::InvariantViolation(format!(
                "frozen ceiling {} does not match the floor-implied ceiling {}",
                self.a, expect
            )));
        }
        Ok(())
    }

    /// Short human-readable name, e.g. `anl-ce` or `apl-ce+rce`.
    pub fn label(&self) -> String {
        let active = self.active_kind.name();
        match self.combiner {
            Combiner::NormalizedOnly => format!("n{active}"),
            Combiner::NnlfOnly => format!("nn{active}"),
            Combiner::Apl => {
                let passive = self
                    .passive_kind
                    .as_ref()
                    .map(|p| p.name())
                    .unwrap_or("none");
                format!("apl-{active}+{passive}")
            }
            Combiner::Anl => format!("anl-{active}"),
            Combiner::AnlStar => format!("anl-{active}*"),
        }
    }
}

/// A batch of probability vectors and the batch-mean marginal computed
/// from them.
#[derive(Debug, Clone)]
pub struct BatchContext {
    probs: Vec<ProbVector>,
    pi: Vec<f64>,
}

impl BatchContext {
    pub fn new(probs: Vec<ProbVector>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CoreError::InvalidInput("batch must be nonempty".to_string()));
        }
        let k = probs[0].len();
        for (n, p) in probs.iter().enumerate() {
            if p.len() != k {
                return Err(CoreError::Shape(format!(
                    "batch entry {n} has {} classes, expected {k}",
                    p.len()
                )));
            }
        }
        let b = probs.len();
        let mut pi = Vec::with_capacity(k);
        let mut column = vec![0.0; b];
        for class in 0..k {
            for (n, p) in probs.iter().enumerate() {
                column[n] = p.get(class);
            }
            pi.push(pairwise_sum(&column) / b as f64);
        }
        Ok(BatchContext { probs, pi })
    }

    pub fn batch_size(&self) -> usize {
        self.probs.len()
    }

    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    pub fn probs(&self) -> &[ProbVector] {
        &self.probs
    }

    /// Batch-mean marginal probability of each class.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
}

fn per_class_losses(active: &BaseLossKind, probs: &[f64]) -> Result<Vec<f64>> {
    probs
        .iter()
        .map(|&p| active_per_class_value(active, p))
        .collect()
}

/// Normalized active loss on a raw slice: `L(p,y) / sum_k L(p,k)`.
pub fn eval_normalized_raw(active: &BaseLossKind, probs: &[f64], y: usize) -> Result<LossEval> {
    active.validate()?;
    if y >= probs.len() {
        return Err(CoreError::IndexOutOfRange {
            index: y,
            len: probs.len(),
        });
    }
    let losses = per_class_losses(active, probs)?;
    let denom = pairwise_sum(&losses);
    if denom <= 0.0 {
        return Err(CoreError::DegenerateInput(
            "normalized loss denominator is zero; every per-class loss vanished".to_string(),
        ));
    }
    let numer = losses[y];
    let value = numer / denom;
    let mut grad = Vec::with_capacity(probs.len());
    for (j, &p_j) in probs.iter().enumerate() {
        let dl_j = active_per_class_grad(active, p_j)?;
        let dn = if j == y { dl_j } else { 0.0 };
        grad.push((dn * denom - numer * dl_j) / (denom * denom));
    }
    Ok(LossEval {
        value,
        grad_p: grad,
    })
}

/// Normalized active loss on a probability vector.
pub fn eval_normalized(active: &BaseLossKind, p: &ProbVector, y: usize) -> Result<LossEval> {
    eval_normalized_raw(active, p.values(), y)
}

fn ceiled_losses(active: &BaseLossKind, a: f64, probs: &[f64]) -> Result<Vec<f64>> {
    let losses = per_class_losses(active, probs)?;
    for (k, &l) in losses.iter().enumerate() {
        if a - l < -CEILING_SLACK {
            return Err(CoreError::InvariantViolation(format!(
                "ceiling {a} is below the realized per-class loss {l} at class {k}"
            )));
        }
    }
    Ok(losses)
}

/// Negative loss function on a raw slice: `sum_{k != y} (A - L(p,k))`.
pub fn eval_nlf_raw(active: &BaseLossKind, a: f64, probs: &[f64], y: usize) -> Result<LossEval> {
    active.validate()?;
    if y >= probs.len() {
        return Err(CoreError::IndexOutOfRange {
            index: y,
            len: probs.len(),
        });
    }
    let losses = ceiled_losses(active, a, probs)?;
    let terms: Vec<f64> = losses
        .iter()
        .enumerate()
        .map(|(k, &l)| if k == y { 0.0 } else { a - l })
        .collect();
    let value = pairwise_sum(&terms);
    let mut grad = Vec::with_capacity(probs.len());
    for (j, &p_j) in probs.iter().enumerate() {
        if j == y {
            grad.push(0.0);
        } else {
            grad.push(-active_per_class_grad(active, p_j)?);
        }
    }
    Ok(LossEval {
        value,
        grad_p: grad,
    })
}

/// Negative loss function on a probability vector.
pub fn eval_nlf(active: &BaseLossKind, a: f64, p: &ProbVector, y: usize) -> Result<LossEval> {
    eval_nlf_raw(active, a, p.values(), y)
}

/// Normalized negative loss function on a raw slice:
/// `1 - (A - L(p,y)) / sum_k (A - L(p,k))`.
pub fn eval_nnlf_raw(active: &BaseLossKind, a: f64, probs: &[f64], y: usize) -> Result<LossEval> {
    active.validate()?;
    if y >= probs.len() {
        return Err(CoreError::IndexOutOfRange {
            index: y,
            len: probs.len(),
        });
    }
    let losses = ceiled_losses(active, a, probs)?;
    let flipped: Vec<f64> = losses.iter().map(|&l| a - l).collect();
    let denom = pairwise_sum(&flipped);
    if denom <= 0.0 {
        return Err(CoreError::DegenerateInput(
            "negative loss denominator is zero; every per-class term sits at the ceiling"
                .to_string(),
        ));
    }
    let numer = flipped[y];
    let value = 1.0 - numer / denom;
    let mut grad = Vec::with_capacity(probs.len());
    for (j, &p_j) in probs.iter().enumerate() {
        let dl_j = active_per_class_grad(active, p_j)?;
        // d(A - L_k)/dp_j = -dl_j when k == j, else 0.
        let dn = if j == y { -dl_j } else { 0.0 };
        let dd = -dl_j;
        grad.push(-(dn * denom - numer * dd) / (denom * denom));
    }
    Ok(LossEval {
        value,
        grad_p: grad,
    })
}

/// Normalized negative loss function on a probability vector.
pub fn eval_nnlf(active: &BaseLossKind, a: f64, p: &ProbVector, y: usize) -> Result<LossEval> {
    eval_nnlf_raw(active, a, p.values(), y)
}

/// Batch entropy regularizer: `log K + sum_k pi_k log pi_k`, together with
/// its gradient with respect to the marginal, `log pi_k + 1`. Per-sample
/// probability gradients follow by the chain rule through the batch mean
/// (a factor of 1/B on every sample).
pub fn eval_entropy_reg(ctx: &BatchContext) -> Result<(f64, Vec<f64>)> {
    let pi = ctx.pi();
    for (k, &m) in pi.iter().enumerate() {
        if m <= 0.0 {
            return Err(CoreError::Precondition(format!(
                "marginal entry {k} = {m} must be positive; feed clipped probabilities"
            )));
        }
    }
    let k = pi.len() as f64;
    let terms: Vec<f64> = pi.iter().map(|&m| m * m.ln()).collect();
    let value = k.ln() + pairwise_sum(&terms);
    let grad_pi = pi.iter().map(|&m| m.ln() + 1.0).collect();
    Ok((value, grad_pi))
}

/// Per-sample value and gradient of the combined loss, excluding the batch
/// entropy term (which is not a per-sample quantity).
pub fn per_sample_eval_raw(
    spec: &FrameworkLossSpec,
    probs: &[f64],
    y: usize,
) -> Result<LossEval> {
    let k = probs.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; k];
    let add = |weight: f64, eval: LossEval, value: &mut f64, grad: &mut Vec<f64>| {
        *value += weight * eval.value;
        for (g, e) in grad.iter_mut().zip(&eval.grad_p) {
            *g += weight * e;
        }
    };
    match spec.combiner {
        Combiner::NormalizedOnly => {
            let norm = eval_normalized_raw(&spec.active_kind, probs, y)?;
            add(spec.alpha, norm, &mut value, &mut grad);
        }
        Combiner::NnlfOnly => {
            let nn = eval_nnlf_raw(&spec.active_kind, spec.a, probs, y)?;
            add(spec.beta, nn, &mut value, &mut grad);
        }
        Combiner::Apl => {
            let norm = eval_normalized_raw(&spec.active_kind, probs, y)?;
            add(spec.alpha, norm, &mut value, &mut grad);
            let passive = spec.passive_kind.as_ref().ok_or_else(|| {
                CoreError::Config("active/passive combination requires a passive kernel".into())
            })?;
            let pas = eval_base_loss_raw(passive, probs, y)?;
            add(spec.beta, pas, &mut value, &mut grad);
        }
        Combiner::Anl | Combiner::AnlStar => {
            let norm = eval_normalized_raw(&spec.active_kind, probs, y)?;
            add(spec.alpha, norm, &mut value, &mut grad);
            let nn = eval_nnlf_raw(&spec.active_kind, spec.a, probs, y)?;
            add(spec.beta, nn, &mut value, &mut grad);
        }
    }
    Ok(LossEval {
        value,
        grad_p: grad,
    })
}

/// Batch value and per-sample gradients of a framework loss.
#[derive(Debug, Clone)]
pub struct BatchLossEval {
    /// Mean per-sample loss plus `lambda * L_reg` when the combiner carries
    /// the entropy term.
    pub value: f64,
    /// Gradient of `value` with respect to each sample's probabilities.
    pub grad_p: Vec<Vec<f64>>,
}

/// Evaluates a framework loss on a batch: mean of the per-sample combined
/// losses, plus the entropy term once per batch for the starred combiner.
/// The returned gradients are gradients of the returned batch value.
pub fn eval_framework_loss(
    spec: &FrameworkLossSpec,
    ctx: &BatchContext,
    labels: &[usize],
) -> Result<BatchLossEval> {
    spec.validate()?;
    let b = ctx.batch_size();
    if labels.len() != b {
        return Err(CoreError::Shape(format!(
            "batch has {b} samples but {} labels",
            labels.len()
        )));
    }
    let inv_b = 1.0 / b as f64;
    let mut values = Vec::with_capacity(b);
    let mut grads = Vec::with_capacity(b);
    for (p, &y) in ctx.probs().iter().zip(labels) {
        let eval = per_sample_eval_raw(spec, p.values(), y)?;
        values.push(eval.value);
        grads.push(eval.grad_p.iter().map(|g| g * inv_b).collect::<Vec<_>>());
    }
    let mut value = pairwise_sum(&values) * inv_b;
    if spec.combiner == Combiner::AnlStar && spec.lambda != 0.0 {
        let (reg, grad_pi) = eval_entropy_reg(ctx)?;
        value += spec.lambda * reg;
        for row in grads.iter_mut() {
            for (g, d) in row.iter_mut().zip(&grad_pi) {
                *g += spec.lambda * inv_b * d;
            }
        }
    }
    Ok(BatchLossEval {
        value,
        grad_p: grads,
    })
}

/// A loss usable in the training loop: either a bare base kernel or a
/// framework combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainingLoss {
    Base(BaseLossKind),
    Framework(FrameworkLossSpec),
}

impl TrainingLoss {
    pub fn label(&self) -> String {
        match self {
            TrainingLoss::Base(kind) => kind.name().to_string(),
            TrainingLoss::Framework(spec) => spec.label(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainingLoss::Base(kind) => kind.validate(),
            TrainingLoss::Framework(spec) => spec.validate(),
        }
    }

    /// Batch value (mean over samples) and its per-sample gradients.
    pub fn eval_batch(&self, ctx: &BatchContext, labels: &[usize]) -> Result<BatchLossEval> {
        match self {
            TrainingLoss::Framework(spec) => eval_framework_loss(spec, ctx, labels),
            TrainingLoss::Base(kind) => {
                let b = ctx.batch_size();
                if labels.len() != b {
                    return Err(CoreError::Shape(format!(
                        "batch has {b} samples but {} labels",
                        labels.len()
                    )));
                }
                let inv_b = 1.0 / b as f64;
                let mut values = Vec::with_capacity(b);
                let mut grads = Vec::with_capacity(b);
                for (p, &y) in ctx.probs().iter().zip(labels) {
                    let eval = eval_base_loss_raw(kind, p.values(), y)?;
                    values.push(eval.value);
                    grads.push(eval.grad_p.iter().map(|g| g * inv_b).collect::<Vec<_>>());
                }
                Ok(BatchLossEval {
                    value: pairwise_sum(&values) * inv_b,
                    grad_p: grads,
                })
            }
        }
    }
}

/// A constructed pair of predictions for the cross-sample gradient
/// ordering property: `better` assigns the label a strictly higher
/// probability than `worse`, both peak at the label, they agree on one
/// benchmark class, and `better` is pointwise no larger elsewhere.
#[derive(Debug, Clone)]
pub struct CrossSamplePair {
    pub better: ProbVector,
    pub worse: ProbVector,
    pub y: usize,
    pub benchmark: usize,
}

/// Builds a premise-satisfying [`CrossSamplePair`] by moving probability
/// mass from the non-benchmark off-label classes onto the label,
/// proportionally to their size, and rejection-sampling until every
/// premise holds strictly.
pub fn gen_cross_sample_pair(
    rng: &mut SplitMix64,
    k: usize,
    floor: f64,
) -> Result<CrossSamplePair> {
    if k < 3 {
        return Err(CoreError::InvalidInput(
            "cross-sample pairs need at least 3 classes".to_string(),
        ));
    }
    const MAX_TRIES: usize = 10_000;
    for _ in 0..MAX_TRIES {
        let base = rng.simplex_point(k);
        let worse: Vec<f64> = base.iter().map(|&v| v.max(floor)).collect();
        // Label = strict argmax of the worse sample.
        let mut y = 0;
        for (i, &v) in worse.iter().enumerate() {
            if v > worse[y] {
                y = i;
            }
        }
        if worse.iter().enumerate().any(|(i, &v)| i != y && v >= worse[y]) {
            continue;
        }
        let mut benchmark = rng.below(k);
        while benchmark == y {
            benchmark = rng.below(k);
        }
        let rest: f64 = worse
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != y && i != benchmark)
            .map(|(_, &v)| v)
            .sum();
        let headroom = (1.0 - worse[y]).min(0.9 * rest);
        if headroom <= 0.0 {
            continue;
        }
        let mass = headroom * rng.uniform_in(0.1, 0.9);
        let mut better = worse.clone();
        better[y] += mass;
        let mut feasible = true;
        for i in 0..k {
            if i == y || i == benchmark {
                continue;
            }
            let moved = mass * worse[i] / rest;
            better[i] -= moved;
            if better[i] < floor {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let better = ProbVector::with_floor(better, floor)?;
        let worse = ProbVector::with_floor(worse, floor)?;
        return Ok(CrossSamplePair {
            better,
            worse,
            y,
            benchmark,
        });
    }
    Err(CoreError::Generation(format!(
        "no premise-satisfying pair found in {MAX_TRIES} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::clip_probs;

    const P_MIN: f64 = 1e-7;

    fn clipped(values: Vec<f64>) -> ProbVector {
        clip_probs(&ProbVector::new(values).unwrap(), P_MIN).unwrap()
    }

    #[test]
    fn normalized_ce_on_uniform_is_one_over_k() {
        for k in [2, 3, 10, 37] {
            let p = ProbVector::uniform(k).unwrap();
            for y in [0, k - 1] {
                let eval = eval_normalized(&BaseLossKind::Ce, &p, y).unwrap();
                assert!((eval.value - 1.0 / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_ce_symmetric_two_class_point() {
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let eval = eval_normalized(&BaseLossKind::Ce, &p, 0).unwrap();
        assert!((eval.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalized_fl_gamma_zero_equals_normalized_ce() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            let k = 2 + rng.below(9);
            let p = clipped(rng.simplex_point(k));
            let y = rng.below(k);
            let nce = eval_normalized(&BaseLossKind::Ce, &p, y).unwrap();
            let nfl = eval_normalized(&BaseLossKind::fl(0.0), &p, y).unwrap();
            assert!((nce.value - nfl.value).abs() < 1e-12);
            for (a, b) in nce.grad_p.iter().zip(&nfl.grad_p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nlf_on_uniform_three_classes() {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let p = ProbVector::uniform(3).unwrap();
        let eval = eval_nlf(&BaseLossKind::Ce, a, &p, 1).unwrap();
        let expected = 2.0 * (a - 3.0_f64.ln());
        assert!((eval.value - expected).abs() < 1e-10);
    }

    #[test]
    fn nlf_vanishes_on_confident_correct_prediction() {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let p = clipped(vec![1.0, 0.0, 0.0]);
        let eval = eval_nlf(&BaseLossKind::Ce, a, &p, 0).unwrap();
        assert!(eval.value.abs() < 1e-9, "value {}", eval.value);
    }

    #[test]
    fn nlf_rejects_too_small_ceiling() {
        let p = clipped(vec![0.98, 0.01, 0.01]);
        let err = eval_nlf(&BaseLossKind::Ce, 1.0, &p, 0);
        assert!(matches!(err, Err(CoreError::InvariantViolation(_))));
    }

    #[test]
    fn nnlf_uniform_value_is_one_minus_one_over_k() {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let p = ProbVector::uniform(10).unwrap();
        let eval = eval_nnlf(&BaseLossKind::Ce, a, &p, 3).unwrap();
        assert!((eval.value - 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalized_with_vanishing_class_losses_is_degenerate() {
        // Off-simplex input where every per-class loss is zero.
        let err = eval_normalized_raw(&BaseLossKind::Ce, &[1.0, 1.0, 1.0], 0);
        assert!(matches!(err, Err(CoreError::DegenerateInput(_))));
    }

    #[test]
    fn nnlf_class_sum_holds_at_the_two_class_boundary() {
        // Near-one-hot points after clipping are the extreme case for the
        // class-sum identity.
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        for values in [vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0 - 1e-12, 1e-12]] {
            let p = clipped(values);
            let sum: f64 = (0..2)
                .map(|y| eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value)
                .sum();
            assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
        }
    }

    #[test]
    fn nnlf_class_sum_is_k_minus_one() {
        let a = loss_constant_a(&BaseLossKind::Ce, P_MIN).unwrap();
        let mut rng = SplitMix64::new(17);
        for k in [2, 3, 10] {
            for _ in 0..50 {
                let p = clipped(rng.simplex_point(k));
                let sum: f64 = (0..k)
                    .map(|y| eval_nnlf(&BaseLossKind::Ce, a, &p, y).unwrap().value)
                    .sum();
                let expected = (k - 1) as f64;
                assert!(
                    (sum - expected).abs() <= 1e-9 * expected,
                    "k={k} sum={sum}"
                );
            }
        }
    }

    #[test]
    fn entropy_reg_is_zero_on_uniform_marginal() {
        let batch = vec![ProbVector::uniform(10).unwrap(); 4];
        let ctx = BatchContext::new(batch).unwrap();
        let (value, grad) = eval_entropy_reg(&ctx).unwrap();
        assert!(value.abs() < 1e-12);
        for &g in &grad {
            assert!((g - (0.1_f64.ln() + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_reg_two_class_values() {
        let ctx = BatchContext::new(vec![ProbVector::new(vec![0.5, 0.5]).unwrap()]).unwrap();
        assert!(eval_entropy_reg(&ctx).unwrap().0.abs() < 1e-12);

        let ctx = BatchContext::new(vec![ProbVector::new(vec![0.9, 0.1]).unwrap()]).unwrap();
        let (value, _) = eval_entropy_reg(&ctx).unwrap();
        assert!((value - 0.368064207168497).abs() < 1e-12);
    }

    #[test]
    fn entropy_reg_near_log_k_on_floored_one_hot() {
        let p = clipped(vec![0.0, 0.0, 1.0]);
        let ctx = BatchContext::new(vec![p]).unwrap();
        let (value, _) = eval_entropy_reg(&ctx).unwrap();
        assert!((value - 3.0_f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn anl_ce_per_sample_value_on_uniform() {
        let spec = FrameworkLossSpec::anl(BaseLossKind::Ce, 5.0, 5.0, P_MIN).unwrap();
        let batch = vec![ProbVector::uniform(10).unwrap(); 3];
        let ctx = BatchContext::new(batch).unwrap();
        let eval = eval_framework_loss(&spec, &ctx, &[0, 5, 9]).unwrap();
        assert!((eval.value - 5.0).abs() < 1e-10);
    }

    #[test]
    fn anl_star_with_zero_lambda_equals_anl() {
        let anl = FrameworkLossSpec::anl(BaseLossKind::Ce, 5.0, 5.0, P_MIN).unwrap();
        let star = FrameworkLossSpec::anl_star(BaseLossKind::Ce, 5.0, 5.0, 0.0, P_MIN).unwrap();
        let mut rng = SplitMix64::new(23);
        for _ in 0..20 {
            let batch: Vec<ProbVector> = (0..4).map(|_| clipped(rng.simplex_point(6))).collect();
            let labels: Vec<usize> = (0..4).map(|_| rng.below(6)).collect();
            let ctx = BatchContext::new(batch).unwrap();
            let a = eval_framework_loss(&anl, &ctx, &labels).unwrap();
            let b = eval_framework_loss(&star, &ctx, &labels).unwrap();
            assert_eq!(a.value, b.value);
            assert_eq!(a.grad_p, b.grad_p);
        }
    }

    #[test]
    fn apl_requires_a_passive_kernel() {
        let mut spec = FrameworkLossSpec::apl(
            BaseLossKind::Ce,
            BaseLossKind::rce_default(),
            1.0,
            1.0,
            P_MIN,
        )
        .unwrap();
        spec.passive_kind = None;
        assert!(matches!(
            spec.validate(),
            Err(CoreError::Config(_))
        ));
    }

    #[test]
    fn cross_sample_pair_premises_hold() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..200 {
            let pair = gen_cross_sample_pair(&mut rng, 10, P_MIN).unwrap();
            let better = pair.better.values();
            let worse = pair.worse.values();
            let y = pair.y;
            let j = pair.benchmark;
            assert!(better[y] > worse[y]);
            assert_eq!(better[j], worse[j]);
            for i in 0..10 {
                assert!(worse[i] <= worse[y]);
                assert!(better[i] <= better[y]);
                if i != y && i != j {
                    assert!(better[i] <= worse[i]);
                }
            }
        }
    }

    #[test]
    fn batch_mean_marginal_matches_direct_average() {
        let probs = vec![
            ProbVector::new(vec![0.8, 0.1, 0.1]).unwrap(),
            ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap(),
        ];
        let ctx = BatchContext::new(probs).unwrap();
        assert!((ctx.pi()[0] - 0.5).abs() < 1e-15);
        assert!((ctx.pi()[1] - 0.3).abs() < 1e-15);
        assert!((ctx.pi()[2] - 0.2).abs() < 1e-15);
    }
}
