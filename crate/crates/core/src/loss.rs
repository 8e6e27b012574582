//! Base loss kernels: value and analytic gradient with respect to the
//! predicted probability vector.
//!
//! Gradients here are taken in p-space; composition through the softmax
//! Jacobian lives in the network module. Values are evaluated on the raw
//! entries of the vector ("free vector" convention), so central finite
//! differences of the value function reproduce the analytic gradients
//! without any simplex projection.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::prob::ProbVector;

/// Default scale for the reverse cross entropy kernel, `scale * (1 - p_y)`.
pub const DEFAULT_RCE_SCALE: f64 = 4.0;

/// One of the supported base losses, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLossKind {
    /// Cross entropy, `-log p_y`.
    Ce,
    /// Focal loss, `-(1 - p_y)^gamma * log p_y`.
    Fl { gamma: f64 },
    /// Mean absolute error against the one-hot target.
    Mae,
    /// Generalized cross entropy, `(1 - p_y^q) / q`.
    Gce { q: f64 },
    /// Reverse cross entropy in its scaled-MAE closed form.
    Rce { scale: f64 },
    /// Symmetric cross entropy, `alpha * CE + beta * RCE`.
    Sce {
        alpha: f64,
        beta: f64,
        rce_scale: f64,
    },
}

impl BaseLossKind {
    pub fn fl(gamma: f64) -> Self {
        BaseLossKind::Fl { gamma }
    }

    pub fn gce(q: f64) -> Self {
        BaseLossKind::Gce { q }
    }

    pub fn rce_default() -> Self {
        BaseLossKind::Rce {
            scale: DEFAULT_RCE_SCALE,
        }
    }

    pub fn sce(alpha: f64, beta: f64) -> Self {
        BaseLossKind::Sce {
            alpha,
            beta,
            rce_scale: DEFAULT_RCE_SCALE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseLossKind::Ce => "ce",
            BaseLossKind::Fl { .. } => "fl",
            BaseLossKind::Mae => "mae",
            BaseLossKind::Gce { .. } => "gce",
            BaseLossKind::Rce { .. } => "rce",
            BaseLossKind::Sce { .. } => "sce",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseLossKind::Ce | BaseLossKind::Mae => Ok(()),
            BaseLossKind::Fl { gamma } => {
                if gamma < 0.0 || !gamma.is_finite() {
                    Err(CoreError::InvalidInput(format!(
                        "focal loss needs gamma >= 0, got {gamma}"
                    )))
                } else {
                    Ok(())
                }
            }
            BaseLossKind::Gce { q } => {
                if q <= 0.0 || q > 1.0 {
                    Err(CoreError::InvalidInput(format!(
                        "generalized cross entropy needs 0 < q <= 1, got {q}"
                    )))
                } else {
                    Ok(())
                }
            }
            BaseLossKind::Rce { scale } => {
                if scale <= 0.0 {
                    Err(CoreError::InvalidInput(format!(
                        "reverse cross entropy needs scale > 0, got {scale}"
                    )))
                } else {
                    Ok(())
                }
            }
            BaseLossKind::Sce {
                alpha,
                beta,
                rce_scale,
            } => {
                if alpha <= 0.0 || beta <= 0.0 || rce_scale <= 0.0 {
                    Err(CoreError::InvalidInput(format!(
                        "symmetric cross entropy needs alpha, beta, rce_scale > 0, got ({alpha}, {beta}, {rce_scale})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Whether this kernel may serve as the active loss inside the
    /// normalized and negative constructions (cross entropy or focal loss).
    pub fn is_negatable_active(&self) -> bool {
        matches!(self, BaseLossKind::Ce | BaseLossKind::Fl { .. })
    }
}

/// Loss value and its full gradient with respect to the probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_p: Vec<f64>,
}

fn check_label(probs: &[f64], y: usize) -> Result<()> {
    if y >= probs.len() {
        return Err(CoreError::IndexOutOfRange {
            index: y,
            len: probs.len(),
        });
    }
    Ok(())
}

/// Per-class value of an active kernel: the loss the kernel would assign
/// if `k` were the label. Only CE and FL decompose this way.
pub(crate) fn active_per_class_value(kind: &BaseLossKind, p_k: f64) -> Result<f64> {
    match *kind {
        BaseLossKind::Ce => Ok(-p_k.ln()),
        BaseLossKind::Fl { gamma } => Ok(-(1.0 - p_k).max(0.0).powf(gamma) * p_k.ln()),
        _ => Err(CoreError::UnsupportedLoss(format!(
            "{} has no per-class active decomposition",
            kind.name()
        ))),
    }
}

/// Derivative of [`active_per_class_value`] with respect to `p_k`.
pub(crate) fn active_per_class_grad(kind: &BaseLossKind, p_k: f64) -> Result<f64> {
    match *kind {
        BaseLossKind::Ce => Ok(-1.0 / p_k),
        BaseLossKind::Fl { gamma } => {
            if gamma == 0.0 {
                return Ok(-1.0 / p_k);
            }
            let onem = (1.0 - p_k).max(0.0);
            // At p_k = 1 the (1-p)^(gamma-1) factor blows up for gamma < 1,
            // but the gradient limit is 0.
            if onem == 0.0 {
                return Ok(0.0);
            }
            Ok(gamma * onem.powf(gamma - 1.0) * p_k.ln() - onem.powf(gamma) / p_k)
        }
        _ => Err(CoreError::UnsupportedLoss(format!(
            "{} has no per-class active decomposition",
            kind.name()
        ))),
    }
}

/// Evaluates a base loss on a raw probability slice. The slice is treated
/// as a free vector in the positive orthant, which is what the
/// finite-difference oracle perturbs.
pub fn eval_base_loss_raw(kind: &BaseLossKind, probs: &[f64], y: usize) -> Result<LossEval> {
    kind.validate()?;
    check_label(probs, y)?;
    let k = probs.len();
    let mut grad = vec![0.0; k];
    let value = match *kind {
        BaseLossKind::Ce => {
            grad[y] = -1.0 / probs[y];
            -probs[y].ln()
        }
        BaseLossKind::Fl { .. } => {
            grad[y] = active_per_class_grad(kind, probs[y])?;
            active_per_class_value(kind, probs[y])?
        }
        BaseLossKind::Mae => {
            let mut value = (1.0 - probs[y]).abs();
            for (j, &p) in probs.iter().enumerate() {
                if j == y {
                    grad[j] = -1.0;
                } else {
                    value += p.abs();
                    grad[j] = 1.0;
                }
            }
            value
        }
        BaseLossKind::Gce { q } => {
            grad[y] = -probs[y].powf(q - 1.0);
            (1.0 - probs[y].powf(q)) / q
        }
        BaseLossKind::Rce { scale } => {
            grad[y] = -scale;
            scale * (1.0 - probs[y])
        }
        BaseLossKind::Sce {
            alpha,
            beta,
            rce_scale,
        } => {
            grad[y] = alpha * (-1.0 / probs[y]) + beta * (-rce_scale);
            alpha * (-probs[y].ln()) + beta * rce_scale * (1.0 - probs[y])
        }
    };
    Ok(LossEval {
        value,
        grad_p: grad,
    })
}

/// Evaluates a base loss for label `y` on a (clipped) probability vector.
pub fn eval_base_loss(kind: &BaseLossKind, p: &ProbVector, y: usize) -> Result<LossEval> {
    eval_base_loss_raw(kind, p.values(), y)
}

/// Maximum per-class value of an active loss under the probability floor.
/// This is the ceiling constant used by the negative loss constructions;
/// for CE it is `-log p_min`.
pub fn loss_constant_a(kind: &BaseLossKind, p_min: f64) -> Result<f64> {
    kind.validate()?;
    if !(p_min > 0.0 && p_min < 1.0) {
        return Err(CoreError::InvalidInput(format!(
            "p_min must lie in (0, 1), got {p_min}"
        )));
    }
    match *kind {
        // -(1-p)^gamma log p is strictly decreasing on (0, 1), so the
        // maximum over [p_min, 1] sits at p_min for both kernels.
        BaseLossKind::Ce => Ok(-p_min.ln()),
        BaseLossKind::Fl { gamma } => Ok((1.0 - p_min).powf(gamma) * -p_min.ln()),
        _ => Err(CoreError::UnsupportedLoss(format!(
            "loss ceiling is defined for active losses only, not {}",
            kind.name()
        ))),
    }
}
