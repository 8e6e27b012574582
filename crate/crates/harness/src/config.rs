//! Experiment configuration: a JSON tree that fully determines a run.
//! Two runs from the same config produce bit-identical metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use anl_core::loss::DEFAULT_RCE_SCALE;
use anl_core::noise::cifar10_pair_map;
use anl_core::{
    Activation, BaseLossKind, FrameworkLossSpec, NoiseKind, NoiseSpec, OptimizerConfig,
    TrainingLoss, DEFAULT_P_MIN,
};

use crate::error::{HarnessError, Result};

fn default_seed() -> u64 {
    1
}

fn default_p_min() -> f64 {
    DEFAULT_P_MIN
}

fn default_cadence() -> usize {
    1
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_lr0() -> f64 {
    0.01
}

fn default_momentum() -> f64 {
    0.9
}

fn default_clip_norm() -> f64 {
    5.0
}

fn default_epochs() -> usize {
    60
}

fn default_batch_size() -> usize {
    128
}

fn default_gamma() -> f64 {
    0.5
}

/// Output format for metrics files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Balanced Gaussian blobs; the test split is generated from an
    /// independent stream of the same seed.
    Blobs {
        k: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        test_per_class: usize,
        /// Absolute minimum distance between class centers; defaults to
        /// `4 * spread`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center_sep: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
    /// IDX image/label file pairs.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// CSV files in the `label,f1,...,fd` layout.
    Csv { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Symmetric {
        eta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Pairwise class flips; omitted `pair_map` means the standard
    /// 10-class confusion map.
    AsymmetricPairMap {
        eta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pair_map: Option<Vec<(usize, usize)>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    AsymmetricCircular {
        eta: f64,
        superclass_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Probe-model surrogate for instance-dependent noise; simplified,
    /// with approximate realized rates.
    InstanceDependent {
        eta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe_epochs: Option<usize>,
    },
    /// Noisy labels supplied by an overlay file (`index,label` header).
    External { overlay: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    /// A named parameter block; see [`preset_block`] for the catalog.
    Preset { name: String },
    Ce,
    Fl {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Mae,
    Gce {
        q: f64,
    },
    Rce {
        scale: f64,
    },
    Sce {
        alpha: f64,
        beta: f64,
        #[serde(default = "default_rce_scale")]
        rce_scale: f64,
    },
    /// Normalized active loss alone.
    Normalized {
        active: ActiveKind,
        #[serde(default = "default_gamma")]
        gamma: f64,
        alpha: f64,
    },
    /// Normalized negative loss alone.
    Nnlf {
        active: ActiveKind,
        #[serde(default = "default_gamma")]
        gamma: f64,
        beta: f64,
    },
    Apl {
        active: ActiveKind,
        #[serde(default = "default_gamma")]
        gamma: f64,
        alpha: f64,
        beta: f64,
        passive: BaseLossKind,
    },
    Anl {
        active: ActiveKind,
        #[serde(default = "default_gamma")]
        gamma: f64,
        alpha: f64,
        beta: f64,
    },
    AnlStar {
        active: ActiveKind,
        #[serde(default = "default_gamma")]
        gamma: f64,
        alpha: f64,
        beta: f64,
        lambda: f64,
    },
}

fn default_rce_scale() -> f64 {
    DEFAULT_RCE_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveKind {
    Ce,
    Fl,
}

impl ActiveKind {
    fn to_base(self, gamma: f64) -> BaseLossKind {
        match self {
            ActiveKind::Ce => BaseLossKind::Ce,
            ActiveKind::Fl => BaseLossKind::Fl { gamma },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: default_hidden(),
            activation: default_activation(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerFileConfig {
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// L1 coefficient; falls back to the loss preset's value when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl Default for OptimizerFileConfig {
    fn default() -> Self {
        OptimizerFileConfig {
            lr0: default_lr0(),
            momentum: default_momentum(),
            weight_decay: 0.0,
            l1: None,
            clip_norm: default_clip_norm(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Record metrics every `cadence` epochs (the final epoch is always
    /// recorded).
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// When false (the default), the wall_ms column is written as zero so
    /// metrics files are byte-identical across runs.
    #[serde(default)]
    pub record_wall_ms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cadence: default_cadence(),
            record_wall_ms: false,
        }
    }
}

/// A fully reproducible experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub loss: LossConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerFileConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Multi-seed expansion for the suite runner; never implicit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// A named loss parameter block: the framework loss plus the L1
/// coefficient that goes with it.
pub struct PresetBlock {
    pub loss: LossConfig,
    pub l1: f64,
}

/// Catalog of shipped parameter blocks: the 10-class blocks use
/// alpha 5, beta 5, L1 5e-5; the 100-class blocks alpha 10, beta 1,
/// L1 5e-7; the starred variants add the entropy weight (2 and 0.01
/// respectively).
pub fn preset_block(name: &str) -> Option<PresetBlock> {
    let (active, gamma) = if name.contains("anl-fl") {
        (ActiveKind::Fl, 0.5)
    } else {
        (ActiveKind::Ce, 0.5)
    };
    match name {
        "cifar10-anl-ce" | "cifar10-anl-fl" => Some(PresetBlock {
            loss: LossConfig::Anl {
                active,
                gamma,
                alpha: 5.0,
                beta: 5.0,
            },
            l1: 5e-5,
        }),
        "cifar100-anl-ce" | "cifar100-anl-fl" => Some(PresetBlock {
            loss: LossConfig::Anl {
                active,
                gamma,
                alpha: 10.0,
                beta: 1.0,
            },
            l1: 5e-7,
        }),
        "cifar10-anl-ce-star" => Some(PresetBlock {
            loss: LossConfig::AnlStar {
                active: ActiveKind::Ce,
                gamma: 0.5,
                alpha: 5.0,
                beta: 5.0,
                lambda: 2.0,
            },
            l1: 5e-5,
        }),
        "cifar100-anl-ce-star" => Some(PresetBlock {
            loss: LossConfig::AnlStar {
                active: ActiveKind::Ce,
                gamma: 0.5,
                alpha: 10.0,
                beta: 1.0,
                lambda: 0.01,
            },
            l1: 5e-7,
        }),
        _ => None,
    }
}

impl LossConfig {
    /// Resolves to a core training loss. Presets are expanded first.
    pub fn resolve(&self, p_min: f64) -> Result<(TrainingLoss, Option<f64>)> {
        let wrap = |r: anl_core::Result<FrameworkLossSpec>| -> Result<TrainingLoss> {
            r.map(TrainingLoss::Framework)
                .map_err(|e| HarnessError::config("loss", e.to_string()))
        };
        match self {
            LossConfig::Preset { name } => {
                let block = preset_block(name).ok_or_else(|| {
                    HarnessError::config("loss.name", format!("unknown preset '{name}'"))
                })?;
                let (loss, _) = block.loss.resolve(p_min)?;
                Ok((loss, Some(block.l1)))
            }
            LossConfig::Ce => Ok((TrainingLoss::Base(BaseLossKind::Ce), None)),
            LossConfig::Fl { gamma } => {
                Ok((TrainingLoss::Base(BaseLossKind::fl(*gamma)), None))
            }
            LossConfig::Mae => Ok((TrainingLoss::Base(BaseLossKind::Mae), None)),
            LossConfig::Gce { q } => Ok((TrainingLoss::Base(BaseLossKind::gce(*q)), None)),
            LossConfig::Rce { scale } => {
                Ok((TrainingLoss::Base(BaseLossKind::Rce { scale: *scale }), None))
            }
            LossConfig::Sce {
                alpha,
                beta,
                rce_scale,
            } => Ok((
                TrainingLoss::Base(BaseLossKind::Sce {
                    alpha: *alpha,
                    beta: *beta,
                    rce_scale: *rce_scale,
                }),
                None,
            )),
            LossConfig::Normalized {
                active,
                gamma,
                alpha,
            } => Ok((
                wrap(FrameworkLossSpec::normalized_only(
                    active.to_base(*gamma),
                    *alpha,
                    p_min,
                ))?,
                None,
            )),
            LossConfig::Nnlf {
                active,
                gamma,
                beta,
            } => Ok((
                wrap(FrameworkLossSpec::nnlf_only(
                    active.to_base(*gamma),
                    *beta,
                    p_min,
                ))?,
                None,
            )),
            LossConfig::Apl {
                active,
                gamma,
                alpha,
                beta,
                passive,
            } => Ok((
                wrap(FrameworkLossSpec::apl(
                    active.to_base(*gamma),
                    passive.clone(),
                    *alpha,
                    *beta,
                    p_min,
                ))?,
                None,
            )),
            LossConfig::Anl {
                active,
                gamma,
                alpha,
                beta,
            } => Ok((
                wrap(FrameworkLossSpec::anl(
                    active.to_base(*gamma),
                    *alpha,
                    *beta,
                    p_min,
                ))?,
                None,
            )),
            LossConfig::AnlStar {
                active,
                gamma,
                alpha,
                beta,
                lambda,
            } => Ok((
                wrap(FrameworkLossSpec::anl_star(
                    active.to_base(*gamma),
                    *alpha,
                    *beta,
                    *lambda,
                    p_min,
                ))?,
                None,
            )),
        }
    }
}

impl NoiseConfig {
    /// Core noise spec for the class-dependent kinds; the seed falls back
    /// to a stream derived from the experiment seed.
    pub fn to_spec(&self, fallback_seed: u64) -> Option<NoiseSpec> {
        let derived = anl_core::rng::mix(fallback_seed, anl_core::rng::tag("noise"));
        match self {
            NoiseConfig::None => Some(NoiseSpec::none()),
            NoiseConfig::Symmetric { eta, seed } => {
                Some(NoiseSpec::symmetric(*eta, seed.unwrap_or(derived)))
            }
            NoiseConfig::AsymmetricPairMap {
                eta,
                pair_map,
                seed,
            } => {
                let map: BTreeMap<usize, usize> = match pair_map {
                    Some(pairs) => pairs.iter().copied().collect(),
                    None => cifar10_pair_map(),
                };
                Some(NoiseSpec::pair_map(*eta, map, seed.unwrap_or(derived)))
            }
            NoiseConfig::AsymmetricCircular {
                eta,
                superclass_size,
                seed,
            } => Some(NoiseSpec::circular(
                *eta,
                *superclass_size,
                seed.unwrap_or(derived),
            )),
            NoiseConfig::InstanceDependent { eta, seed, .. } => Some(NoiseSpec {
                kind: NoiseKind::InstanceDependent,
                eta: *eta,
                pair_map: None,
                superclass_size: None,
                seed: seed.unwrap_or(derived),
            }),
            NoiseConfig::External { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(content: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(content)
            .map_err(|e| HarnessError::config(origin, format!("invalid config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| {
            HarnessError::config(
                path.display().to_string(),
                format!("cannot read config: {e}"),
            )
        })?;
        Self::from_json(&content, &path.display().to_string())
    }

    /// Human-readable run label: the explicit name, or the loss label.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        self.loss
            .resolve(self.p_min)
            .map(|(loss, _)| loss.label())
            .unwrap_or_else(|_| "invalid".to_string())
    }

    /// The resolved optimizer, with the preset's L1 coefficient applied
    /// when the optimizer block does not set one.
    pub fn resolved_optimizer(&self) -> Result<OptimizerConfig> {
        let (_, preset_l1) = self.loss.resolve(self.p_min)?;
        let opt = OptimizerConfig {
            lr0: self.optimizer.lr0,
            momentum: self.optimizer.momentum,
            weight_decay: self.optimizer.weight_decay,
            l1_coeff: self.optimizer.l1.or(preset_l1).unwrap_or(0.0),
            clip_norm: self.optimizer.clip_norm,
            epochs: self.optimizer.epochs,
            batch_size: self.optimizer.batch_size,
        };
        opt.validate()
            .map_err(|e| HarnessError::config("optimizer", e.to_string()))?;
        Ok(opt)
    }

    /// Structural validation with field paths; called before running.
    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Blobs {
                k,
                per_class,
                dim,
                spread,
                test_per_class,
                center_sep,
                ..
            } => {
                if *k < 2 {
                    return Err(HarnessError::config("dataset.k", "need at least 2 classes"));
                }
                if *per_class == 0 || *test_per_class == 0 {
                    return Err(HarnessError::config(
                        "dataset.per_class",
                        "per_class and test_per_class must be positive",
                    ));
                }
                if *dim < 2 {
                    return Err(HarnessError::config("dataset.dim", "need at least 2 features"));
                }
                if *spread <= 0.0 {
                    return Err(HarnessError::config("dataset.spread", "must be positive"));
                }
                if let Some(sep) = center_sep {
                    if *sep <= 0.0 {
                        return Err(HarnessError::config("dataset.center_sep", "must be positive"));
                    }
                }
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                for (field, path) in [
                    ("dataset.train_images", train_images),
                    ("dataset.train_labels", train_labels),
                    ("dataset.test_images", test_images),
                    ("dataset.test_labels", test_labels),
                ] {
                    if !path.exists() {
                        return Err(HarnessError::config(
                            field,
                            format!("file not found: {}", path.display()),
                        ));
                    }
                }
            }
            DatasetConfig::Csv { train, test } => {
                for (field, path) in [("dataset.train", train), ("dataset.test", test)] {
                    if !path.exists() {
                        return Err(HarnessError::config(
                            field,
                            format!("file not found: {}", path.display()),
                        ));
                    }
                }
            }
        }
        match &self.noise {
            NoiseConfig::External { overlay } => {
                if !overlay.exists() {
                    return Err(HarnessError::config(
                        "noise.overlay",
                        format!("file not found: {}", overlay.display()),
                    ));
                }
            }
            other => {
                if let Some(spec) = other.to_spec(self.seed) {
                    let k = self.dataset_k();
                    spec.validate(k)
                        .map_err(|e| HarnessError::config("noise", e.to_string()))?;
                }
            }
        }
        if !(self.p_min > 0.0 && self.p_min < 0.5) {
            return Err(HarnessError::config("p_min", "must lie in (0, 0.5)"));
        }
        if self.eval.cadence == 0 {
            return Err(HarnessError::config("eval.cadence", "must be positive"));
        }
        if self.model.hidden_dims.contains(&0) {
            return Err(HarnessError::config(
                "model.hidden_dims",
                "hidden widths must be positive",
            ));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(HarnessError::config("seeds", "seed list must be nonempty"));
            }
        }
        self.loss.resolve(self.p_min)?;
        self.resolved_optimizer()?;
        Ok(())
    }

    /// Class count as far as it is known before loading (blobs only; file
    /// datasets discover it at load time).
    fn dataset_k(&self) -> usize {
        match &self.dataset {
            DatasetConfig::Blobs { k, .. } => *k,
            _ => 10,
        }
    }

    /// Copy with a different seed (used by the suite's seed expansion and
    /// the `--seed` override).
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.seed = seed;
        out.seeds = None;
        out
    }
}
