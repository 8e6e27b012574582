//! A small feedforward classifier with an explicit forward cache, analytic
//! backpropagation from p-space loss gradients, and the SGD recipe used by
//! the experiment harness (momentum, global-norm clipping, L2 and L1
//! regularization folded into the gradient, cosine learning-rate
//! annealing).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::prob::{clip_probs, softmax, ProbVector};
use crate::rng::SplitMix64;

const CHECKPOINT_MAGIC: &[u8; 4] = b"ANL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture and initialization seed. Zero hidden layers gives
/// multinomial logistic regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(CoreError::Config("input dimension must be positive".into()));
        }
        if self.classes < 2 {
            return Err(CoreError::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(CoreError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// One dense layer; weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: Vec<f64>,
    b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn matvec(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    version: u64,
    floor: f64,
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per hidden layer, per sample.
    pre_acts: Vec<Vec<Vec<f64>>>,
    /// Post-activations per hidden layer, per sample.
    acts: Vec<Vec<Vec<f64>>>,
    /// Raw softmax outputs per sample (before flooring).
    raw_probs: Vec<Vec<f64>>,
}

/// Feedforward classifier with a softmax head.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetworkConfig,
    layers: Vec<Layer>,
    cache: Option<ForwardCache>,
    version: u64,
}

/// Per-layer parameter gradients, matching the network's layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<Vec<f64>>,
}

impl ParamGrads {
    fn zeros_like(net: &Network) -> Self {
        ParamGrads {
            d_w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            d_b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }
}

/// Momentum buffers for [`Network::sgd_step`].
#[derive(Debug, Clone)]
pub struct MomentumState {
    v_w: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl MomentumState {
    pub fn zeros(net: &Network) -> Self {
        MomentumState {
            v_w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }
}

/// Optimizer hyperparameters. `l1_coeff` is the weight of the L1 penalty
/// (applied as a sign subgradient), `weight_decay` the L2 coefficient;
/// both are folded into the gradient before the global-norm clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub l1_coeff: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl OptimizerConfig {
    /// The standard recipe used by the experiments: momentum 0.9 with the
    /// global gradient norm clipped to 5.
    pub fn standard_recipe(lr0: f64, epochs: usize, batch_size: usize) -> Self {
        OptimizerConfig {
            lr0,
            momentum: 0.9,
            weight_decay: 0.0,
            l1_coeff: 0.0,
            clip_norm: 5.0,
            epochs,
            batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(CoreError::Config("lr0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::Config("momentum must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || self.l1_coeff < 0.0 {
            return Err(CoreError::Config("regularizer weights must be nonnegative".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(CoreError::Config("clip_norm must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Half-cosine annealing to zero: `lr0 * 0.5 * (1 + cos(pi * epoch / total))`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> f64 {
    debug_assert!(epoch <= total_epochs && total_epochs > 0);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos())
}

/// Builds a network with fan-in-scaled uniform weights and zero biases,
/// deterministically from the config's seed.
pub fn init_network(cfg: NetworkConfig) -> Result<Network> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.init_seed);
    let mut layers = Vec::new();
    let mut in_dim = cfg.input_dim;
    for &out_dim in cfg.hidden_dims.iter().chain(std::iter::once(&cfg.classes)) {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.uniform_in(-scale, scale))
            .collect();
        layers.push(Layer {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        });
        in_dim = out_dim;
    }
    Ok(Network {
        cfg,
        layers,
        cache: None,
        version: 0,
    })
}

impl Network {
    /// All-zero parameters; forward of any input yields uniform
    /// probabilities. Useful as a test fixture.
    pub fn zeroed(cfg: NetworkConfig) -> Result<Network> {
        cfg.validate()?;
        let mut layers = Vec::new();
        let mut in_dim = cfg.input_dim;
        for &out_dim in cfg.hidden_dims.iter().chain(std::iter::once(&cfg.classes)) {
            layers.push(Layer {
                w: vec![0.0; in_dim * out_dim],
                b: vec![0.0; out_dim],
                in_dim,
                out_dim,
            });
            in_dim = out_dim;
        }
        Ok(Network {
            cfg,
            layers,
            cache: None,
            version: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layers[l].out_dim, self.layers[l].in_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access in declaration order (weights then biases per
    /// layer); used by the finite-difference checks.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        self.version += 1;
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w[idx] = value;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = value;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    fn check_batch(&self, batch: &[Vec<f64>]) -> Result<()> {
        for (n, row) in batch.iter().enumerate() {
            if row.len() != self.cfg.input_dim {
                return Err(CoreError::Shape(format!(
                    "batch row {n} has {} features, expected {}",
                    row.len(),
                    self.cfg.input_dim
                )));
            }
        }
        Ok(())
    }

    fn activate(&self, z: f64) -> f64 {
        match self.cfg.activation {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative of the activation given pre-activation z and
    /// post-activation a.
    fn activate_grad(&self, z: f64, a: f64) -> f64 {
        match self.cfg.activation {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn forward_sample(
        &self,
        x: &[f64],
        pre_acts: &mut Vec<Vec<f64>>,
        acts: &mut Vec<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        pre_acts.clear();
        acts.clear();
        let n_hidden = self.layers.len() - 1;
        let mut current = x.to_vec();
        for layer in &self.layers[..n_hidden] {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.matvec(&current, &mut z);
            let a: Vec<f64> = z.iter().map(|&v| self.activate(v)).collect();
            pre_acts.push(z);
            current = a.clone();
            acts.push(a);
        }
        let mut logits = Vec::with_capacity(self.cfg.classes);
        self.layers[n_hidden].matvec(&current, &mut logits);
        Ok(logits)
    }

    /// Forward pass that populates the cache consumed by [`Self::backward`].
    /// Output probabilities are floored at `p_min`.
    pub fn forward(&mut self, batch: &[Vec<f64>], p_min: f64) -> Result<Vec<ProbVector>> {
        self.check_batch(batch)?;
        let mut cache = ForwardCache {
            version: self.version,
            floor: p_min,
            inputs: batch.to_vec(),
            pre_acts: Vec::with_capacity(batch.len()),
            acts: Vec::with_capacity(batch.len()),
            raw_probs: Vec::with_capacity(batch.len()),
        };
        let mut out = Vec::with_capacity(batch.len());
        let mut pre = Vec::new();
        let mut act = Vec::new();
        for x in batch {
            let logits = self.forward_sample(x, &mut pre, &mut act)?;
            let raw = softmax(&logits)?;
            let clipped = clip_probs(&raw, p_min)?;
            cache.pre_acts.push(std::mem::take(&mut pre));
            cache.acts.push(std::mem::take(&mut act));
            cache.raw_probs.push(raw.values().to_vec());
            out.push(clipped);
        }
        self.cache = Some(cache);
        Ok(out)
    }

    /// Pure forward pass (no cache); used for evaluation and probing.
    pub fn predict_probs(&self, batch: &[Vec<f64>], p_min: f64) -> Result<Vec<ProbVector>> {
        self.check_batch(batch)?;
        let mut out = Vec::with_capacity(batch.len());
        let mut pre = Vec::new();
        let mut act = Vec::new();
        for x in batch {
            let logits = self.forward_sample(x, &mut pre, &mut act)?;
            let raw = softmax(&logits)?;
            out.push(clip_probs(&raw, p_min)?);
        }
        Ok(out)
    }

    /// Hard predictions (argmax class per sample; first index wins ties).
    pub fn predict_classes(&self, batch: &[Vec<f64>], p_min: f64) -> Result<Vec<usize>> {
        let probs = self.predict_probs(batch, p_min)?;
        Ok(probs
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, &v) in p.values().iter().enumerate() {
                    if v > p.get(best) {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Backpropagates per-sample loss gradients (taken with respect to the
    /// floored output probabilities) to parameter gradients, summing over
    /// the batch. The flooring is differentiated exactly: coordinates that
    /// were raised to the floor pass no gradient. The softmax Jacobian is
    /// `diag(p) - p p^T` on the raw probabilities.
    pub fn backward(&self, grad_p: &[Vec<f64>]) -> Result<ParamGrads> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            CoreError::State("backward called without a cached forward pass".into())
        })?;
        if cache.version != self.version {
            return Err(CoreError::State(
                "forward cache is stale; parameters changed since the last forward".into(),
            ));
        }
        if grad_p.len() != cache.inputs.len() {
            return Err(CoreError::Shape(format!(
                "{} gradient rows for a cached batch of {}",
                grad_p.len(),
                cache.inputs.len()
            )));
        }
        let mut grads = ParamGrads::zeros_like(self);
        for (n, g_clip) in grad_p.iter().enumerate() {
            if g_clip.len() != self.cfg.classes {
                return Err(CoreError::Shape(format!(
                    "gradient row {n} has {} entries, expected {}",
                    g_clip.len(),
                    self.cfg.classes
                )));
            }
            let p = &cache.raw_probs[n];
            // Flooring mask, then softmax Jacobian.
            let g_raw: Vec<f64> = p
                .iter()
                .zip(g_clip)
                .map(|(&pi, &g)| if pi >= cache.floor { g } else { 0.0 })
                .collect();
            let dot: f64 = p.iter().zip(&g_raw).map(|(&pi, &g)| pi * g).sum();
            let mut delta: Vec<f64> = p
                .iter()
                .zip(&g_raw)
                .map(|(&pi, &g)| pi * (g - dot))
                .collect();

            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let below: &[f64] = if l == 0 {
                    &cache.inputs[n]
                } else {
                    &cache.acts[n][l - 1]
                };
                let dw = &mut grads.d_w[l];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (slot, &x) in row.iter_mut().zip(below) {
                        *slot += d * x;
                    }
                    grads.d_b[l][o] += d;
                }
                if l == 0 {
                    break;
                }
                let mut g_below = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (slot, &w) in g_below.iter_mut().zip(row) {
                        *slot += d * w;
                    }
                }
                let hl = l - 1;
                delta = g_below
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| {
                        g * self.activate_grad(cache.pre_acts[n][hl][i], cache.acts[n][hl][i])
                    })
                    .collect();
            }
        }
        Ok(grads)
    }

    /// One SGD-with-momentum update. Weight decay and the L1 sign
    /// subgradient are folded into the gradient first, then the global
    /// gradient norm is clipped, then the momentum buffer and parameters
    /// are updated.
    pub fn sgd_step(
        &mut self,
        grads: &ParamGrads,
        opt: &OptimizerConfig,
        state: &mut MomentumState,
        lr: f64,
    ) -> Result<()> {
        opt.validate()?;
        if grads.d_w.len() != self.layers.len() {
            return Err(CoreError::Shape("gradient layer count mismatch".into()));
        }
        // Regularizers fold into a working copy of the gradient.
        let mut work_w: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut work_b: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            if grads.d_w[l].len() != layer.w.len() || grads.d_b[l].len() != layer.b.len() {
                return Err(CoreError::Shape(format!("gradient shape mismatch at layer {l}")));
            }
            let gw = grads.d_w[l]
                .iter()
                .zip(&layer.w)
                .map(|(&g, &w)| g + opt.weight_decay * w + opt.l1_coeff * sign(w))
                .collect();
            let gb = grads.d_b[l]
                .iter()
                .zip(&layer.b)
                .map(|(&g, &b)| g + opt.weight_decay * b + opt.l1_coeff * sign(b))
                .collect();
            work_w.push(gw);
            work_b.push(gb);
        }
        let mut sq = 0.0;
        for gw in &work_w {
            sq += gw.iter().map(|g| g * g).sum::<f64>();
        }
        for gb in &work_b {
            sq += gb.iter().map(|g| g * g).sum::<f64>();
        }
        let norm = sq.sqrt();
        let scale = if norm > opt.clip_norm {
            opt.clip_norm / norm
        } else {
            1.0
        };
        for l in 0..self.layers.len() {
            for (i, g) in work_w[l].iter().enumerate() {
                let v = &mut state.v_w[l][i];
                *v = opt.momentum * *v + g * scale;
                self.layers[l].w[i] -= lr * *v;
            }
            for (i, g) in work_b[l].iter().enumerate() {
                let v = &mut state.v_b[l][i];
                *v = opt.momentum * *v + g * scale;
                self.layers[l].b[i] -= lr * *v;
            }
        }
        self.version += 1;
        Ok(())
    }

    /// Serializes the network to the checkpoint layout: magic, config
    /// block, then layer parameters in declaration order as little-endian
    /// 64-bit floats.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(self.cfg.input_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cfg.hidden_dims.len() as u32).to_le_bytes());
        for &h in &self.cfg.hidden_dims {
            buf.extend_from_slice(&(h as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.cfg.classes as u32).to_le_bytes());
        buf.push(match self.cfg.activation {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        });
        buf.extend_from_slice(&self.cfg.init_seed.to_le_bytes());
        for layer in &self.layers {
            for &w in &layer.w {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for &b in &layer.b {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Network> {
        let mut cur = Cursor {
            bytes,
            pos: 0,
            origin,
        };
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CoreError::format(
                origin,
                "offset 0",
                format!("bad checkpoint magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
            ));
        }
        let input_dim = cur.u32()? as usize;
        let n_hidden = cur.u32()? as usize;
        if n_hidden > 1024 {
            return Err(CoreError::format(
                origin,
                format!("offset {}", cur.pos - 4),
                format!("implausible hidden layer count {n_hidden}"),
            ));
        }
        let mut hidden_dims = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden_dims.push(cur.u32()? as usize);
        }
        let classes = cur.u32()? as usize;
        let activation = match cur.u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            other => {
                return Err(CoreError::format(
                    origin,
                    format!("offset {}", cur.pos - 1),
                    format!("unknown activation tag {other}"),
                ))
            }
        };
        let init_seed = cur.u64()?;
        let cfg = NetworkConfig {
            input_dim,
            hidden_dims,
            classes,
            activation,
            init_seed,
        };
        cfg.validate()
            .map_err(|e| CoreError::format(origin, "config block", e.to_string()))?;
        let mut net = Network::zeroed(cfg)?;
        for layer in &mut net.layers {
            for slot in layer.w.iter_mut() {
                *slot = cur.f64()?;
            }
            for slot in layer.b.iter_mut() {
                *slot = cur.f64()?;
            }
        }
        if cur.pos != bytes.len() {
            return Err(CoreError::format(
                origin,
                format!("offset {}", cur.pos),
                format!("{} trailing bytes after parameters", bytes.len() - cur.pos),
            ));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file =
            fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Network> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Network::from_bytes(&bytes, &path.display().to_string())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::format(
                self.origin,
                format!("offset {}", self.pos),
                format!("truncated: needed {n} more bytes"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
