//! Probability-simplex primitives shared by the loss and network modules:
//! numerically stable softmax, probability flooring, and one-hot encoding.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numeric::pairwise_sum;

/// Default probability floor applied before any `log` is taken.
pub const DEFAULT_P_MIN: f64 = 1e-7;

/// A point on the K-simplex together with the floor that has been applied
/// to it. A floor of 0 means no clipping has happened yet.
///
/// After clipping, every entry is at least `floor` and the entries sum to 1
/// within `K * floor` (clipping raises small entries without renormalizing,
/// so the sum can exceed 1 by at most `K * floor`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    values: Vec<f64>,
    floor: f64,
}

impl ProbVector {
    /// Wraps a raw simplex point (no floor applied).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_floor(values, 0.0)
    }

    /// Wraps a simplex point carrying a known floor.
    pub fn with_floor(values: Vec<f64>, floor: f64) -> Result<Self> {
        let k = values.len();
        if k < 2 {
            return Err(CoreError::InvalidInput(format!(
                "probability vector needs at least 2 classes, got {k}"
            )));
        }
        if !(0.0..1.0).contains(&floor) {
            return Err(CoreError::InvalidInput(format!(
                "probability floor must lie in [0, 1), got {floor}"
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::InvalidInput(format!(
                    "probability entry {i} is not finite: {v}"
                )));
            }
            if v < floor {
                return Err(CoreError::InvalidInput(format!(
                    "probability entry {i} = {v} is below the floor {floor}"
                )));
            }
        }
        let sum = pairwise_sum(&values);
        let tol = k as f64 * floor + 1e-9;
        if (sum - 1.0).abs() > tol {
            return Err(CoreError::InvalidInput(format!(
                "probability entries sum to {sum}, expected 1 within {tol}"
            )));
        }
        Ok(ProbVector { values, floor })
    }

    /// The uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k.max(1)])
    }

    /// Wraps values without validation. Only for internal evaluation of
    /// finite-difference perturbations, which step off the simplex.
    pub(crate) fn unchecked(values: Vec<f64>, floor: f64) -> Self {
        ProbVector { values, floor }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// A target distribution over labels; one-hot for hard labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    values: Vec<f64>,
}

impl LabelDistribution {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The index of the single unit entry, if this distribution is one-hot.
    pub fn hard_label(&self) -> Option<usize> {
        let mut hit = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v == 1.0 {
                if hit.is_some() {
                    return None;
                }
                hit = Some(i);
            } else if v != 0.0 {
                return None;
            }
        }
        hit
    }
}

/// Numerically stable softmax: the max logit is subtracted before
/// exponentiation so that large logits cannot overflow.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    let mut max = f64::NEG_INFINITY;
    for (i, &z) in logits.iter().enumerate() {
        if !z.is_finite() {
            return Err(CoreError::InvalidInput(format!(
                "logit {i} is not finite: {z}"
            )));
        }
        if z > max {
            max = z;
        }
    }
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total = pairwise_sum(&exps);
    let values = exps.into_iter().map(|e| e / total).collect();
    ProbVector::with_floor(values, 0.0)
}

/// Raises every entry of `p` to at least `p_min`. No renormalization is
/// performed: the floor exists to keep `log p` finite, and rescaling would
/// silently change the ceiling constant used by the negative losses.
pub fn clip_probs(p: &ProbVector, p_min: f64) -> Result<ProbVector> {
    let k = p.len() as f64;
    if !(p_min > 0.0 && p_min < 1.0 / k) {
        return Err(CoreError::InvalidInput(format!(
            "p_min must lie in (0, 1/K) = (0, {}), got {p_min}",
            1.0 / k
        )));
    }
    let values = p.values().iter().map(|&v| v.max(p_min)).collect();
    ProbVector::with_floor(values, p_min)
}

/// One-hot target distribution: entry `y` is 1, all others 0.
pub fn one_hot(y: usize, k: usize) -> Result<LabelDistribution> {
    if y >= k {
        return Err(CoreError::IndexOutOfRange { index: y, len: k });
    }
    let mut values = vec![0.0; k];
    values[y] = 1.0;
    Ok(LabelDistribution { values })
}
