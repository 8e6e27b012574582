//! Small numeric helpers shared across modules.

/// Pairwise (fixed-shape tree) summation. Deterministic regardless of how
/// the caller produced the slice, and better conditioned than a running sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (n - 1 in the denominator); 0 for fewer than
/// two observations.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = pairwise_sum(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>());
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Relative error with a guard for near-zero pairs: when both values are
/// below `floor` in magnitude they are considered equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
