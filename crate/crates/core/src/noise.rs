//! Label-corruption kernels and their seeded application: symmetric,
//! asymmetric (pairwise class map and circular within-superclass), a
//! simplified instance-dependent injector, and support for externally
//! supplied noisy-label overlays.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::Network;
use crate::numeric::pairwise_sum;
use crate::rng::SplitMix64;

/// Which corruption process to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Symmetric,
    AsymmetricPairMap,
    AsymmetricCircular,
    InstanceDependent,
    External,
}

/// A label-noise description. `eta` is the flip probability; the map and
/// superclass size qualify the asymmetric kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub eta: f64,
    pub pair_map: Option<BTreeMap<usize, usize>>,
    pub superclass_size: Option<usize>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            eta: 0.0,
            pair_map: None,
            superclass_size: None,
            seed: 0,
        }
    }

    pub fn symmetric(eta: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Symmetric,
            eta,
            pair_map: None,
            superclass_size: None,
            seed,
        }
    }

    pub fn pair_map(eta: f64, map: BTreeMap<usize, usize>, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::AsymmetricPairMap,
            eta,
            pair_map: Some(map),
            superclass_size: None,
            seed,
        }
    }

    pub fn circular(eta: f64, superclass_size: usize, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::AsymmetricCircular,
            eta,
            pair_map: None,
            superclass_size: Some(superclass_size),
            seed,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if k < 2 {
            return Err(CoreError::Config(format!(
                "noise needs at least 2 classes, got {k}"
            )));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(CoreError::Config(format!(
                "noise rate must lie in [0, 1), got {}",
                self.eta
            )));
        }
        match self.kind {
            NoiseKind::AsymmetricPairMap => {
                let map = self.pair_map.as_ref().ok_or_else(|| {
                    CoreError::Config("pair-map noise requires a pair map".to_string())
                })?;
                let mut targets = std::collections::BTreeSet::new();
                for (&src, &dst) in map {
                    if src >= k || dst >= k {
                        return Err(CoreError::Config(format!(
                            "pair map entry {src} -> {dst} is outside the {k} classes"
                        )));
                    }
                    if src == dst {
                        return Err(CoreError::Config(format!(
                            "pair map entry {src} -> {dst} maps a class to itself"
                        )));
                    }
                    if !targets.insert(dst) {
                        return Err(CoreError::Config(format!(
                            "pair map target {dst} is used twice; the map must be an injection"
                        )));
                    }
                }
            }
            NoiseKind::AsymmetricCircular => {
                let size = self.superclass_size.ok_or_else(|| {
                    CoreError::Config("circular noise requires a superclass size".to_string())
                })?;
                if size == 0 || !k.is_multiple_of(size) {
                    return Err(CoreError::Config(format!(
                        "superclass size {size} must divide the class count {k}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether a symmetric spec sits inside the noise regime where the
    /// symmetric-loss tolerance guarantee applies (`eta < (K-1)/K`).
    /// Violations are allowed but should be surfaced to the user.
    pub fn symmetric_regime_ok(&self, k: usize) -> bool {
        self.kind != NoiseKind::Symmetric || self.eta < (k as f64 - 1.0) / k as f64
    }
}

/// The standard 10-class pairwise confusion map: truck to automobile, bird
/// to airplane, deer to horse, and cat/dog both ways, in the usual class
/// index order (0 airplane, 1 automobile, 2 bird, 3 cat, 4 deer, 5 dog,
/// 6 frog, 7 horse, 8 ship, 9 truck).
pub fn cifar10_pair_map() -> BTreeMap<usize, usize> {
    BTreeMap::from([(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)])
}

/// A K x K row-stochastic label corruption kernel; entry (i, j) is the
/// probability that true label i is recorded as j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| {
                let mut row = vec![0.0; k];
                row[i] = 1.0;
                row
            })
            .collect();
        TransitionMatrix { rows }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = TransitionMatrix { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.rows.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != k {
                return Err(CoreError::Shape(format!(
                    "transition row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v < 0.0) {
                return Err(CoreError::InvariantViolation(format!(
                    "transition row {i} has a negative entry"
                )));
            }
            let sum = pairwise_sum(row);
            if (sum - 1.0).abs() > 1e-12 {
                return Err(CoreError::InvariantViolation(format!(
                    "transition row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the class-level transition matrix for a noise spec.
pub fn build_transition(spec: &NoiseSpec, k: usize) -> Result<TransitionMatrix> {
    spec.validate(k)?;
    let eta = spec.eta;
    let rows = match spec.kind {
        NoiseKind::None => return Ok(TransitionMatrix::identity(k)),
        NoiseKind::Symmetric => (0..k)
            .map(|i| {
                let off = eta / (k as f64 - 1.0);
                let mut row = vec![off; k];
                row[i] = 1.0 - eta;
                row
            })
            .collect(),
        NoiseKind::AsymmetricPairMap => {
            let map = spec.pair_map.as_ref().expect("validated above");
            (0..k)
                .map(|i| {
                    let mut row = vec![0.0; k];
                    match map.get(&i) {
                        Some(&dst) => {
                            row[i] = 1.0 - eta;
                            row[dst] = eta;
                        }
                        None => row[i] = 1.0,
                    }
                    row
                })
                .collect()
        }
        NoiseKind::AsymmetricCircular => {
            let size = spec.superclass_size.expect("validated above");
            (0..k)
                .map(|i| {
                    let mut row = vec![0.0; k];
                    let block = i / size;
                    let next = block * size + (i - block * size + 1) % size;
                    if next == i {
                        row[i] = 1.0;
                    } else {
                        row[i] = 1.0 - eta;
                        row[next] = eta;
                    }
                    row
                })
                .collect()
        }
        NoiseKind::InstanceDependent | NoiseKind::External => {
            return Err(CoreError::Config(format!(
                "{:?} noise has no class-level transition matrix",
                spec.kind
            )))
        }
    };
    TransitionMatrix::from_rows(rows)
}

/// Outcome of corrupting a label sequence: the noisy labels, which entries
/// were flipped, and the realized flip fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub noisy_labels: Vec<usize>,
    pub flip_mask: Vec<bool>,
    pub realized_rate: f64,
}

impl CorruptionRecord {
    pub fn flip_count(&self) -> usize {
        self.flip_mask.iter().filter(|&&f| f).count()
    }
}

fn draw_from_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}

/// Resamples every label independently from its transition row. The draw
/// for sample `n` is keyed by `(seed, n)`, so the outcome does not depend
/// on iteration order and is reproducible bit for bit.
pub fn corrupt_labels(
    labels: &[usize],
    transition: &TransitionMatrix,
    seed: u64,
) -> Result<CorruptionRecord> {
    let k = transition.k();
    let mut noisy = Vec::with_capacity(labels.len());
    let mut flips = Vec::with_capacity(labels.len());
    for (n, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(CoreError::IndexOutOfRange { index: y, len: k });
        }
        let u = SplitMix64::keyed(seed, n as u64).next_f64();
        let drawn = draw_from_row(transition.row(y), u);
        noisy.push(drawn);
        flips.push(drawn != y);
    }
    let rate = if labels.is_empty() {
        0.0
    } else {
        flips.iter().filter(|&&f| f).count() as f64 / labels.len() as f64
    };
    Ok(CorruptionRecord {
        noisy_labels: noisy,
        flip_mask: flips,
        realized_rate: rate,
    })
}

/// Simplified instance-dependent corruption driven by a probe model: each
/// sample flips to the probe's top incorrect prediction with probability
/// proportional to the probe's error confidence `1 - p(y|x)`, rescaled so
/// that the expected flip rate is `eta`.
///
/// This is a deliberately simple surrogate for prediction-error noise
/// synthesis, not a faithful instance-dependent noise generator; treat
/// its rates as approximate.
pub fn instance_dependent_corrupt(
    features: &[Vec<f64>],
    labels: &[usize],
    eta: f64,
    probe: &Network,
    p_min: f64,
    seed: u64,
) -> Result<CorruptionRecord> {
    if features.len() != labels.len() {
        return Err(CoreError::Shape(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(CoreError::Config(format!(
            "noise rate must lie in [0, 1), got {eta}"
        )));
    }
    let k = probe.config().classes;
    for &y in labels {
        if y >= k {
            return Err(CoreError::Config(format!(
                "label {y} does not fit the probe's {k} output classes"
            )));
        }
    }
    let n = labels.len();
    if n == 0 || eta == 0.0 {
        return Ok(CorruptionRecord {
            noisy_labels: labels.to_vec(),
            flip_mask: vec![false; n],
            realized_rate: 0.0,
        });
    }

    let probs = probe.predict_probs(features, p_min)?;
    let mut confidence = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for (p, &y) in probs.iter().zip(labels) {
        confidence.push(1.0 - p.get(y));
        let mut best = usize::MAX;
        let mut best_p = f64::NEG_INFINITY;
        for (j, &pj) in p.values().iter().enumerate() {
            if j != y && pj > best_p {
                best = j;
                best_p = pj;
            }
        }
        targets.push(best);
    }

    // Fit the scale c so that mean(min(1, c * confidence)) = eta; the mean
    // is monotone in c, so bisection converges.
    let mean_flip = |c: f64| -> f64 {
        confidence.iter().map(|&e| (c * e).min(1.0)).sum::<f64>() / n as f64
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while mean_flip(hi) < eta && hi < 1e18 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_flip(mid) < eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);

    let mut noisy = Vec::with_capacity(n);
    let mut flips = Vec::with_capacity(n);
    for i in 0..n {
        let q = (c * confidence[i]).min(1.0);
        let u = SplitMix64::keyed(seed, i as u64).next_f64();
        if u < q {
            noisy.push(targets[i]);
            flips.push(targets[i] != labels[i]);
        } else {
            noisy.push(labels[i]);
            flips.push(false);
        }
    }
    let rate = flips.iter().filter(|&&f| f).count() as f64 / n as f64;
    Ok(CorruptionRecord {
        noisy_labels: noisy,
        flip_mask: flips,
        realized_rate: rate,
    })
}

/// Class frequencies of a label sequence.
pub fn empirical_marginals(labels: &[usize], k: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(CoreError::InvalidInput(
            "marginals need at least one label".to_string(),
        ));
    }
    let mut counts = vec![0usize; k];
    for &y in labels {
        if y >= k {
            return Err(CoreError::IndexOutOfRange { index: y, len: k });
        }
        counts[y] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / labels.len() as f64)
        .collect())
}
