//! # anl-core
//!
//! A desk-scale laboratory for learning with noisy labels, built around
//! the active negative loss family:
//!
//! - [`prob`]: simplex primitives (softmax, probability flooring, one-hot).
//! - [`loss`]: base loss kernels (CE, FL, MAE, GCE, RCE, SCE) with
//!   analytic p-space gradients.
//! - [`framework`]: normalized losses, negative loss functions and their
//!   normalized form, the active/passive and active/negative
//!   combinations, and the batch entropy regularizer.
//! - [`noise`]: label-corruption kernels (symmetric, asymmetric pair-map,
//!   circular within-superclass, probe-based instance-dependent) with
//!   seeded, order-independent application.
//! - [`nn`]: a small feedforward classifier with explicit forward cache,
//!   analytic backpropagation, and the SGD/momentum/cosine recipe.
//! - [`data`]: Gaussian blob generation, IDX and CSV loading,
//!   standardization, and noisy-label overlays.
//! - [`verify`]: executable checks for the loss-family properties, each
//!   reporting trials, failures, and worst error.
//!
//! All randomness is routed through [`rng::SplitMix64`] keyed by explicit
//! seeds, so every result in this crate is reproducible bit for bit.

pub mod data;
pub mod error;
pub mod framework;
pub mod loss;
pub mod nn;
pub mod noise;
pub mod numeric;
pub mod prob;
pub mod rng;
pub mod verify;

pub use error::{CoreError, Result};
pub use framework::{
    eval_framework_loss, eval_nlf, eval_nnlf, eval_normalized, BatchContext, Combiner,
    FrameworkLossSpec, TrainingLoss,
};
pub use loss::{eval_base_loss, loss_constant_a, BaseLossKind, LossEval};
pub use nn::{cosine_lr, init_network, Activation, Network, NetworkConfig, OptimizerConfig};
pub use noise::{build_transition, corrupt_labels, CorruptionRecord, NoiseKind, NoiseSpec};
pub use prob::{clip_probs, one_hot, softmax, LabelDistribution, ProbVector, DEFAULT_P_MIN};
