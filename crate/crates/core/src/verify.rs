//! Executable checks for the loss-family properties: finite-difference
//! gradient oracles, class-sum symmetry and boundedness sweeps, the two
//! gradient-ordering properties of the normalized negative cross entropy,
//! and the exact affine noisy-risk identity for symmetric losses (with
//! argmin preservation on finite candidate sets).
//!
//! Every check is deterministic given its seed and reports trials,
//! failures, the worst observed error, and a witness for the first
//! failure. Near-tie inputs for the strict-inequality checks are
//! resampled and the resample count is reported.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::framework::{
    eval_framework_loss, eval_nnlf, eval_nnlf_raw, eval_normalized, gen_cross_sample_pair,
    per_sample_eval_raw, BatchContext, FrameworkLossSpec,
};
use crate::loss::{eval_base_loss_raw, loss_constant_a, BaseLossKind};
use crate::noise::{build_transition, NoiseSpec};
use crate::numeric::rel_err;
use crate::prob::{clip_probs, ProbVector};
use crate::rng::{mix, tag, SplitMix64};

/// Gap below which a strict inequality is considered a near-tie and the
/// input is resampled.
const TIE_GAP: f64 = 1e-12;

/// Headroom above the floor for finite-difference sampling. The central
/// difference of `log` carries a relative truncation error of roughly
/// `h^2 / (3 p^2)`; with step 1e-6 this margin keeps it near 3e-7, well
/// under the 1e-4 fidelity target.
pub const FD_MARGIN: f64 = 1e-3;

/// Outcome of one check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: u64,
    pub failures: u64,
    pub worst_error: f64,
    pub witness: Option<String>,
    pub resamples: u64,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        CheckReport {
            check_name: name.to_string(),
            trials: 0,
            failures: 0,
            worst_error: 0.0,
            witness: None,
            resamples: 0,
        }
    }

    fn record_error(&mut self, err: f64) {
        if err > self.worst_error {
            self.worst_error = err;
        }
    }

    fn fail(&mut self, witness: String) {
        self.failures += 1;
        if self.witness.is_none() {
            self.witness = Some(witness);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    /// One human-readable line, e.g. for the CLI.
    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} (trials={}, failures={}, worst_error={:.3e}, resamples={})",
            self.check_name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.trials,
            self.failures,
            self.worst_error,
            self.resamples
        )
    }
}

/// A random simplex point clipped to the floor.
pub fn random_clipped_prob(rng: &mut SplitMix64, k: usize, p_min: f64) -> Result<ProbVector> {
    clip_probs(&ProbVector::new(rng.simplex_point(k))?, p_min)
}

/// A random simplex point whose entries all sit at least `margin` above
/// the floor, suitable for finite-difference perturbation.
pub fn random_interior_prob(
    rng: &mut SplitMix64,
    k: usize,
    p_min: f64,
    margin: f64,
) -> Result<ProbVector> {
    loop {
        let p = random_clipped_prob(rng, k, p_min)?;
        if p.values().iter().all(|&v| v >= p_min + margin) {
            return Ok(p);
        }
    }
}

/// Central finite differences of a scalar function of the probability
/// vector, treating it as a free vector (no simplex projection). Requires
/// `h` in [1e-8, 1e-4] and every entry at least `p_min + h` so the
/// perturbed points stay above the floor.
pub fn finite_diff(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    p: &[f64],
    h: f64,
    p_min: f64,
) -> Result<Vec<f64>> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(CoreError::Precondition(format!(
            "finite-difference step must lie in [1e-8, 1e-4], got {h}"
        )));
    }
    for (k, &v) in p.iter().enumerate() {
        if v < p_min + h {
            return Err(CoreError::Precondition(format!(
                "entry {k} = {v} leaves no room for a downward step of {h} above the floor {p_min}"
            )));
        }
    }
    let mut work = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let original = work[k];
        work[k] = original + h;
        let up = f(&work)?;
        work[k] = original - h;
        let down = f(&work)?;
        work[k] = original;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference gradient of a base loss.
pub fn finite_diff_base(
    kind: &BaseLossKind,
    p: &ProbVector,
    y: usize,
    h: f64,
) -> Result<Vec<f64>> {
    let kind = kind.clone();
    finite_diff(
        &mut |probs| Ok(eval_base_loss_raw(&kind, probs, y)?.value),
        p.values(),
        h,
        p.floor(),
    )
}

/// Finite-difference gradient of the per-sample part of a framework loss.
pub fn finite_diff_framework(
    spec: &FrameworkLossSpec,
    p: &ProbVector,
    y: usize,
    h: f64,
) -> Result<Vec<f64>> {
    finite_diff(
        &mut |probs| Ok(per_sample_eval_raw(spec, probs, y)?.value),
        p.values(),
        h,
        p.floor(),
    )
}

/// Finite-difference gradient of a framework loss at the batch level (the
/// only way to differentiate the batch entropy term). Returns a gradient
/// row per sample.
pub fn finite_diff_batch(
    spec: &FrameworkLossSpec,
    probs: &[ProbVector],
    labels: &[usize],
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let floor = probs.iter().map(|p| p.floor()).fold(f64::INFINITY, f64::min);
    let batch_value = |rows: &[Vec<f64>]| -> Result<f64> {
        // Perturbed rows step off the simplex, so bypass validation.
        let vectors: Vec<ProbVector> = rows
            .iter()
            .map(|r| ProbVector::unchecked(r.clone(), 0.0))
            .collect();
        let ctx = BatchContext::new(vectors)?;
        Ok(eval_framework_loss(spec, &ctx, labels)?.value)
    };
    let mut rows: Vec<Vec<f64>> = probs.iter().map(|p| p.values().to_vec()).collect();
    let mut out = Vec::with_capacity(rows.len());
    for n in 0..rows.len() {
        let mut grad_row = Vec::with_capacity(rows[n].len());
        for k in 0..rows[n].len() {
            let original = rows[n][k];
            if original < floor + h {
                return Err(CoreError::Precondition(format!(
                    "sample {n} entry {k} leaves no room for the step"
                )));
            }
            rows[n][k] = original + h;
            let up = batch_value(&rows)?;
            rows[n][k] = original - h;
            let down = batch_value(&rows)?;
            rows[n][k] = original;
            grad_row.push((up - down) / (2.0 * h));
        }
        out.push(grad_row);
    }
    Ok(out)
}

/// Sweeps the class-sum of the normalized negative loss over random
/// clipped points: the sum over all K labels must equal K - 1 within
/// `tol` (relative).
pub fn check_symmetry(
    active: &BaseLossKind,
    k_list: &[usize],
    trials_per_k: u64,
    tol: f64,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    let a = loss_constant_a(active, p_min)?;
    check_symmetry_with_ceiling(active, a, k_list, trials_per_k, tol, p_min, seed)
}

/// Same sweep with an explicit ceiling. Deliberately mis-set ceilings are
/// the negative control: they must produce failures.
pub fn check_symmetry_with_ceiling(
    active: &BaseLossKind,
    a: f64,
    k_list: &[usize],
    trials_per_k: u64,
    tol: f64,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new(&format!("nn{}_class_sum_symmetry", active.name()));
    let mut rng = SplitMix64::new(mix(seed, tag("symmetry")));
    for &k in k_list {
        let expected = (k - 1) as f64;
        for _ in 0..trials_per_k {
            report.trials += 1;
            let p = random_clipped_prob(&mut rng, k, p_min)?;
            let mut sum = 0.0;
            let mut errored = false;
            for y in 0..k {
                match eval_nnlf(active, a, &p, y) {
                    Ok(eval) => sum += eval.value,
                    Err(e) => {
                        report.fail(format!("k={k} eval error at y={y}: {e}"));
                        errored = true;
                        break;
                    }
                }
            }
            if errored {
                continue;
            }
            let err = (sum - expected).abs() / expected;
            report.record_error(err);
            if err > tol {
                report.fail(format!("k={k} class sum {sum} vs {expected}, p={:?}", p.values()));
            }
        }
    }
    Ok(report)
}

/// Checks that the normalized loss and the normalized negative loss stay
/// inside [0, 1] on random clipped points, for every label.
pub fn check_boundedness(
    active: &BaseLossKind,
    k_list: &[usize],
    trials_per_k: u64,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    let a = loss_constant_a(active, p_min)?;
    let mut report = CheckReport::new(&format!("n{}/nn{}_boundedness", active.name(), active.name()));
    let mut rng = SplitMix64::new(mix(seed, tag("bounds")));
    for &k in k_list {
        for _ in 0..trials_per_k {
            report.trials += 1;
            let p = random_clipped_prob(&mut rng, k, p_min)?;
            for y in 0..k {
                let nn = eval_nnlf(active, a, &p, y)?.value;
                let norm = eval_normalized(active, &p, y)?.value;
                for (name, v) in [("nn", nn), ("norm", norm)] {
                    let excess = (-v).max(v - 1.0).max(0.0);
                    report.record_error(excess);
                    if excess > 0.0 {
                        report.fail(format!("k={k} y={y} {name} value {v} outside [0,1]"));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Direction of a strict-inequality assertion; `Swapped` is the mutated
/// negative control and must produce violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingSense {
    Expected,
    Swapped,
}

/// Within one prediction, the normalized negative cross entropy pushes
/// harder on off-label classes with smaller probability: for
/// `p(j1) < p(j2)` (both off-label), `dL/dp(j1) > dL/dp(j2)`.
pub fn check_within_sample_ordering(
    k_list: &[usize],
    trials_per_k: u64,
    p_min: f64,
    seed: u64,
    sense: OrderingSense,
) -> Result<CheckReport> {
    let active = BaseLossKind::Ce;
    let a = loss_constant_a(&active, p_min)?;
    let mut report = CheckReport::new("nnce_within_sample_gradient_ordering");
    let mut rng = SplitMix64::new(mix(seed, tag("within")));
    for &k in k_list {
        if k < 3 {
            return Err(CoreError::InvalidInput(
                "within-sample ordering needs at least 3 classes".to_string(),
            ));
        }
        for _ in 0..trials_per_k {
            report.trials += 1;
            let p = random_clipped_prob(&mut rng, k, p_min)?;
            let y = rng.below(k);
            let grad = eval_nnlf(&active, a, &p, y)?.grad_p;
            for j1 in 0..k {
                for j2 in 0..k {
                    if j1 == j2 || j1 == y || j2 == y {
                        continue;
                    }
                    if p.get(j1) >= p.get(j2) {
                        continue;
                    }
                    if p.get(j2) - p.get(j1) < TIE_GAP {
                        report.resamples += 1;
                        continue;
                    }
                    let holds = match sense {
                        OrderingSense::Expected => grad[j1] > grad[j2],
                        OrderingSense::Swapped => grad[j1] < grad[j2],
                    };
                    if !holds {
                        report.fail(format!(
                            "k={k} y={y} p(j1={j1})={} p(j2={j2})={} grads ({}, {})",
                            p.get(j1),
                            p.get(j2),
                            grad[j1],
                            grad[j2]
                        ));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Across two predictions that both peak at the label and agree on a
/// benchmark class, the better-learned one (higher label probability,
/// pointwise no larger elsewhere) receives the larger gradient at the
/// benchmark class.
pub fn check_cross_sample_ordering(
    k: usize,
    trials: u64,
    p_min: f64,
    seed: u64,
    sense: OrderingSense,
) -> Result<CheckReport> {
    let active = BaseLossKind::Ce;
    let a = loss_constant_a(&active, p_min)?;
    let mut report = CheckReport::new("nnce_cross_sample_gradient_ordering");
    let mut rng = SplitMix64::new(mix(seed, tag("cross")));
    let mut done = 0;
    let mut attempts = 0;
    while done < trials {
        attempts += 1;
        if attempts > trials * 100 {
            return Err(CoreError::Generation(
                "too many resamples while building cross-sample pairs".to_string(),
            ));
        }
        let pair = gen_cross_sample_pair(&mut rng, k, p_min)?;
        let g_better = eval_nnlf(&active, a, &pair.better, pair.y)?.grad_p[pair.benchmark];
        let g_worse = eval_nnlf(&active, a, &pair.worse, pair.y)?.grad_p[pair.benchmark];
        if (g_better - g_worse).abs() < TIE_GAP * g_better.abs().max(g_worse.abs()).max(1.0) {
            report.resamples += 1;
            continue;
        }
        done += 1;
        report.trials += 1;
        let holds = match sense {
            OrderingSense::Expected => g_better > g_worse,
            OrderingSense::Swapped => g_better < g_worse,
        };
        if !holds {
            report.fail(format!(
                "y={} benchmark={} better={:?} worse={:?} grads ({g_better}, {g_worse})",
                pair.y,
                pair.benchmark,
                pair.better.values(),
                pair.worse.values()
            ));
        }
    }
    Ok(report)
}

/// Both gradient-ordering checks with their standard trial counts.
pub fn check_gradient_ordering(trials: u64, p_min: f64, seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_within_sample_ordering(&[3, 10], trials, p_min, seed, OrderingSense::Expected)?,
        check_cross_sample_ordering(10, trials / 10 + 1, p_min, seed, OrderingSense::Expected)?,
    ])
}

/// The loss whose noisy expectation the affine identity is evaluated on.
#[derive(Debug, Clone)]
pub enum AffineRiskLoss {
    /// Normalized negative form of an active kernel (symmetric with
    /// class-sum K - 1; the identity must hold).
    Nnlf { active: BaseLossKind },
    /// A bare base kernel (non-symmetric kernels are the negative
    /// control; the identity must fail for them).
    Base(BaseLossKind),
}

impl AffineRiskLoss {
    fn name(&self) -> String {
        match self {
            AffineRiskLoss::Nnlf { active } => format!("nn{}", active.name()),
            AffineRiskLoss::Base(kind) => kind.name().to_string(),
        }
    }

    fn value(&self, a: f64, probs: &[f64], y: usize) -> Result<f64> {
        match self {
            AffineRiskLoss::Nnlf { active } => Ok(eval_nnlf_raw(active, a, probs, y)?.value),
            AffineRiskLoss::Base(kind) => Ok(eval_base_loss_raw(kind, probs, y)?.value),
        }
    }
}

/// Exact affine noisy-risk identity under symmetric label noise: for a
/// symmetric loss with class-sum K - 1 and noise rate eta, the analytic
/// expectation over the noisy label equals
/// `(1 - eta*K/(K-1)) * L(p, y) + eta` for every (p, y).
pub fn check_affine_noisy_risk(
    loss: &AffineRiskLoss,
    eta: f64,
    k: usize,
    trials: u64,
    tol: f64,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    if eta >= (k as f64 - 1.0) / k as f64 {
        return Err(CoreError::Precondition(format!(
            "noise rate {eta} outside the symmetric tolerance regime for k={k}"
        )));
    }
    let a = match loss {
        AffineRiskLoss::Nnlf { active } => loss_constant_a(active, p_min)?,
        AffineRiskLoss::Base(_) => 0.0,
    };
    let transition = if eta > 0.0 {
        build_transition(&NoiseSpec::symmetric(eta, 0), k)?
    } else {
        build_transition(&NoiseSpec::none(), k)?
    };
    let slope = 1.0 - eta * k as f64 / (k as f64 - 1.0);
    let mut report = CheckReport::new(&format!("affine_noisy_risk_{}_eta{eta}", loss.name()));
    let mut rng = SplitMix64::new(mix(seed, tag("affine")));
    for _ in 0..trials {
        report.trials += 1;
        let p = random_clipped_prob(&mut rng, k, p_min)?;
        let y = rng.below(k);
        let clean = loss.value(a, p.values(), y)?;
        let mut noisy = 0.0;
        for (j, &t) in transition.row(y).iter().enumerate() {
            if t > 0.0 {
                noisy += t * loss.value(a, p.values(), j)?;
            }
        }
        let predicted = slope * clean + eta;
        let err = (noisy - predicted).abs();
        report.record_error(err);
        if err > tol {
            report.fail(format!(
                "y={y} clean={clean} noisy={noisy} predicted={predicted} p={:?}",
                p.values()
            ));
        }
    }
    Ok(report)
}

/// On finite candidate sets, the minimizer of the clean loss and of the
/// exact noisy expectation coincide whenever the affine slope is positive.
pub fn check_argmin_preservation(
    active: &BaseLossKind,
    eta: f64,
    k: usize,
    trials: u64,
    candidates: usize,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    if candidates < 2 {
        return Err(CoreError::InvalidInput(
            "argmin preservation needs at least 2 candidates".to_string(),
        ));
    }
    let a = loss_constant_a(active, p_min)?;
    let transition = build_transition(&NoiseSpec::symmetric(eta, 0), k)?;
    let mut report = CheckReport::new(&format!("argmin_preservation_nn{}_eta{eta}", active.name()));
    let mut rng = SplitMix64::new(mix(seed, tag("argmin")));
    let mut done = 0;
    let mut attempts = 0;
    while done < trials {
        attempts += 1;
        if attempts > trials * 100 {
            return Err(CoreError::Generation(
                "too many resamples while building candidate sets".to_string(),
            ));
        }
        let y = rng.below(k);
        let set: Vec<ProbVector> = (0..candidates)
            .map(|_| random_clipped_prob(&mut rng, k, p_min))
            .collect::<Result<_>>()?;
        let clean: Vec<f64> = set
            .iter()
            .map(|p| Ok(eval_nnlf(active, a, p, y)?.value))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..candidates).collect();
        order.sort_by(|&i, &j| clean[i].partial_cmp(&clean[j]).unwrap());
        if clean[order[1]] - clean[order[0]] < TIE_GAP {
            report.resamples += 1;
            continue;
        }
        let noisy: Vec<f64> = set
            .iter()
            .map(|p| {
                let mut acc = 0.0;
                for (j, &t) in transition.row(y).iter().enumerate() {
                    acc += t * eval_nnlf(active, a, p, j)?.value;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let noisy_argmin = (0..candidates)
            .min_by(|&i, &j| noisy[i].partial_cmp(&noisy[j]).unwrap())
            .unwrap();
        done += 1;
        report.trials += 1;
        if noisy_argmin != order[0] {
            report.fail(format!(
                "y={y} clean argmin {} vs noisy argmin {noisy_argmin}",
                order[0]
            ));
        }
    }
    Ok(report)
}

/// Finite-difference fidelity of the analytic gradients for the standard
/// loss family (base kernels plus the framework constructions).
pub fn check_gradient_fidelity(
    trials: u64,
    tol: f64,
    p_min: f64,
    seed: u64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("gradient_finite_difference_fidelity");
    let mut rng = SplitMix64::new(mix(seed, tag("fd")));
    let h = 1e-6;
    let base_kinds = [
        BaseLossKind::Ce,
        BaseLossKind::fl(0.5),
        BaseLossKind::Mae,
        BaseLossKind::gce(0.7),
        BaseLossKind::rce_default(),
        BaseLossKind::sce(0.1, 1.0),
    ];
    let specs = [
        FrameworkLossSpec::normalized_only(BaseLossKind::Ce, 1.0, p_min)?,
        FrameworkLossSpec::nnlf_only(BaseLossKind::Ce, 1.0, p_min)?,
        FrameworkLossSpec::nnlf_only(BaseLossKind::fl(0.5), 1.0, p_min)?,
        FrameworkLossSpec::anl(BaseLossKind::Ce, 5.0, 5.0, p_min)?,
        FrameworkLossSpec::anl(BaseLossKind::fl(0.5), 5.0, 5.0, p_min)?,
    ];
    for _ in 0..trials {
        let k = [3, 5, 10][rng.below(3)];
        let p = random_interior_prob(&mut rng, k, p_min, FD_MARGIN)?;
        let y = rng.below(k);
        for kind in &base_kinds {
            report.trials += 1;
            let analytic = eval_base_loss_raw(kind, p.values(), y)?.grad_p;
            let fd = finite_diff_base(kind, &p, y, h)?;
            let worst = analytic
                .iter()
                .zip(&fd)
                .map(|(&a, &b)| rel_err(a, b))
                .fold(0.0, f64::max);
            report.record_error(worst);
            if worst > tol {
                report.fail(format!("{} worst rel err {worst}", kind.name()));
            }
        }
        for spec in &specs {
            report.trials += 1;
            let analytic = per_sample_eval_raw(spec, p.values(), y)?.grad_p;
            let fd = finite_diff_framework(spec, &p, y, h)?;
            let worst = analytic
                .iter()
                .zip(&fd)
                .map(|(&a, &b)| rel_err(a, b))
                .fold(0.0, f64::max);
            report.record_error(worst);
            if worst > tol {
                report.fail(format!("{} worst rel err {worst}", spec.label()));
            }
        }
    }
    // The starred combiner needs batch-level differentiation for its
    // entropy term.
    let star = FrameworkLossSpec::anl_star(BaseLossKind::Ce, 5.0, 5.0, 0.5, p_min)?;
    for _ in 0..trials.min(50) {
        report.trials += 1;
        let k = 5;
        let probs: Vec<ProbVector> = (0..3)
            .map(|_| random_interior_prob(&mut rng, k, p_min, FD_MARGIN))
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = (0..3).map(|_| rng.below(k)).collect();
        let ctx = BatchContext::new(probs.clone())?;
        let analytic = eval_framework_loss(&star, &ctx, &labels)?.grad_p;
        let fd = finite_diff_batch(&star, &probs, &labels, h)?;
        let mut worst = 0.0f64;
        for (ga, gf) in analytic.iter().zip(&fd) {
            for (&a, &b) in ga.iter().zip(gf) {
                worst = worst.max(rel_err(a, b));
            }
        }
        report.record_error(worst);
        if worst > tol {
            report.fail(format!("{} worst rel err {worst}", star.label()));
        }
    }
    Ok(report)
}

/// The standard check battery used by the command-line `verify` command.
pub fn run_standard_checks(seed: u64, p_min: f64) -> Result<Vec<CheckReport>> {
    let k_sweep = [2usize, 3, 10, 100];
    let mut reports = vec![
        check_symmetry(&BaseLossKind::Ce, &k_sweep, 1000, 1e-9, p_min, seed)?,
        check_symmetry(&BaseLossKind::fl(0.5), &k_sweep, 1000, 1e-9, p_min, seed)?,
        check_boundedness(&BaseLossKind::Ce, &k_sweep, 1000, p_min, seed)?,
        check_boundedness(&BaseLossKind::fl(0.5), &k_sweep, 1000, p_min, seed)?,
        check_gradient_fidelity(100, 1e-4, p_min, seed)?,
    ];
    reports.extend(check_gradient_ordering(10_000, p_min, seed)?);
    for eta in [0.0, 0.1, 0.3, 0.6] {
        reports.push(check_affine_noisy_risk(
            &AffineRiskLoss::Nnlf {
                active: BaseLossKind::Ce,
            },
            eta,
            10,
            1000,
            1e-10,
            p_min,
            seed,
        )?);
    }
    reports.push(check_argmin_preservation(
        &BaseLossKind::Ce,
        0.3,
        10,
        1000,
        10,
        p_min,
        seed,
    )?);
    // Sensitivity controls: mutated formulas must fail.
    let negative = vec![
        check_symmetry_with_ceiling(&BaseLossKind::Ce, 1.0, &[10], 200, 1e-9, p_min, seed)?,
        check_within_sample_ordering(&[10], 200, p_min, seed, OrderingSense::Swapped)?,
        check_cross_sample_ordering(10, 200, p_min, seed, OrderingSense::Swapped)?,
        check_affine_noisy_risk(
            &AffineRiskLoss::Base(BaseLossKind::Ce),
            0.3,
            10,
            200,
            1e-10,
            p_min,
            seed,
        )?,
    ];
    for mut control in negative {
        let fired = !control.passed();
        control.check_name = format!("negative_control_{}", control.check_name);
        // A control that fails to fire is itself a suite failure.
        if fired {
            control.failures = 0;
            control.witness = None;
        } else {
            control.failures = 1;
            control.witness = Some("mutated formula produced no violations".to_string());
        }
        reports.push(control);
    }
    Ok(reports)
}

/// Serializes reports as one JSON record per line.
pub fn reports_to_jsonl(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!(
            "{{\"check_name\":\"{}\",\"trials\":{},\"failures\":{},\"worst_error\":{:.17e},\"resamples\":{}}}\n",
            r.check_name, r.trials, r.failures, r.worst_error, r.resamples
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const P_MIN: f64 = 1e-7;

    #[test]
    fn finite_diff_rejects_bad_steps_and_floor_violations() {
        let p = ProbVector::uniform(4).unwrap();
        let f = &mut |probs: &[f64]| Ok(probs.iter().sum());
        assert!(finite_diff(f, p.values(), 1e-3, 0.0).is_err());
        assert!(finite_diff(f, p.values(), 1e-9, 0.0).is_err());
        let clipped = clip_probs(&ProbVector::new(vec![1.0, 0.0, 0.0]).unwrap(), P_MIN).unwrap();
        assert!(matches!(
            finite_diff(f, clipped.values(), 1e-6, P_MIN),
            Err(CoreError::Precondition(_))
        ));
    }

    #[test]
    fn finite_diff_recovers_mae_pattern() {
        let mut rng = SplitMix64::new(5);
        let p = random_interior_prob(&mut rng, 6, P_MIN, 1e-5).unwrap();
        let fd = finite_diff_base(&BaseLossKind::Mae, &p, 2, 1e-6).unwrap();
        for (j, &g) in fd.iter().enumerate() {
            let expect = if j == 2 { -1.0 } else { 1.0 };
            assert!((g - expect).abs() < 1e-8, "j={j} g={g}");
        }
    }

    #[test]
    fn finite_diff_step_robustness() {
        let mut rng = SplitMix64::new(6);
        let p = random_interior_prob(&mut rng, 5, P_MIN, 1e-3).unwrap();
        let lo = finite_diff_base(&BaseLossKind::Ce, &p, 1, 1e-8).unwrap();
        let hi = finite_diff_base(&BaseLossKind::Ce, &p, 1, 1e-4).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            assert!(rel_err(*a, *b) < 1e-4);
        }
    }

    #[test]
    fn symmetry_sweep_passes_for_ce_and_fl() {
        for kind in [BaseLossKind::Ce, BaseLossKind::fl(0.5)] {
            let report = check_symmetry(&kind, &[2, 3, 10], 100, 1e-9, P_MIN, 1).unwrap();
            assert!(report.passed(), "{}", report.summary_line());
        }
    }

    #[test]
    fn symmetry_negative_control_fires() {
        let report =
            check_symmetry_with_ceiling(&BaseLossKind::Ce, 1.0, &[10], 100, 1e-9, P_MIN, 1)
                .unwrap();
        assert!(report.failures > 0);
        assert!(report.witness.is_some());
    }

    #[test]
    fn boundedness_sweep_passes() {
        let report = check_boundedness(&BaseLossKind::Ce, &[2, 3, 10], 200, P_MIN, 2).unwrap();
        assert!(report.passed(), "{}", report.summary_line());
    }

    #[test]
    fn ordering_checks_pass_and_mutants_fire() {
        let within =
            check_within_sample_ordering(&[3, 10], 500, P_MIN, 3, OrderingSense::Expected)
                .unwrap();
        assert!(within.passed(), "{}", within.summary_line());
        let within_mut =
            check_within_sample_ordering(&[10], 200, P_MIN, 3, OrderingSense::Swapped).unwrap();
        assert!(within_mut.failures > 0);

        let cross = check_cross_sample_ordering(10, 200, P_MIN, 4, OrderingSense::Expected).unwrap();
        assert!(cross.passed(), "{}", cross.summary_line());
        let cross_mut =
            check_cross_sample_ordering(10, 100, P_MIN, 4, OrderingSense::Swapped).unwrap();
        assert!(cross_mut.failures > 0);
    }

    #[test]
    fn affine_identity_holds_for_nnce_and_fails_for_ce() {
        let good = check_affine_noisy_risk(
            &AffineRiskLoss::Nnlf {
                active: BaseLossKind::Ce,
            },
            0.3,
            10,
            200,
            1e-10,
            P_MIN,
            5,
        )
        .unwrap();
        assert!(good.passed(), "{}", good.summary_line());

        let zero = check_affine_noisy_risk(
            &AffineRiskLoss::Nnlf {
                active: BaseLossKind::Ce,
            },
            0.0,
            10,
            50,
            1e-12,
            P_MIN,
            5,
        )
        .unwrap();
        assert!(zero.passed());

        let bad = check_affine_noisy_risk(
            &AffineRiskLoss::Base(BaseLossKind::Ce),
            0.3,
            10,
            200,
            1e-10,
            P_MIN,
            5,
        )
        .unwrap();
        assert!(bad.failures > 0);
    }

    #[test]
    fn argmin_preservation_holds() {
        let report =
            check_argmin_preservation(&BaseLossKind::Ce, 0.3, 10, 200, 10, P_MIN, 6).unwrap();
        assert!(report.passed(), "{}", report.summary_line());
    }

    #[test]
    fn gradient_fidelity_sweep_passes() {
        let report = check_gradient_fidelity(50, 1e-4, P_MIN, 7).unwrap();
        assert!(report.passed(), "{}", report.summary_line());
    }

    #[test]
    fn checks_are_deterministic() {
        let a = check_gradient_fidelity(20, 1e-4, P_MIN, 8).unwrap();
        let b = check_gradient_fidelity(20, 1e-4, P_MIN, 8).unwrap();
        assert_eq!(a.worst_error, b.worst_error);
        assert_eq!(a.trials, b.trials);
    }

    #[test]
    fn standard_battery_is_green() {
        let reports = run_standard_checks(1, P_MIN).unwrap();
        for r in &reports {
            assert!(r.passed(), "{}", r.summary_line());
        }
    }
}
