//! One-vs-all binary cross-entropy with label smoothing.

/// Numerically stable `bce(s, t) = max(s,0) - s*t + ln(1 + exp(-|s|))`.
fn bce_with_logit(score: f64, target: f64) -> f64 {
    score.max(0.0) - score * target + (1.0 + (-score.abs()).exp()).ln()
}

/// Loss of one statement: per-entity sigmoid cross-entropy against smoothed
/// targets `(1 - eps) * [i == gold] + eps / V`, averaged over the entities.
pub fn compute_loss(scores: &[f64], gold: usize, eps: f64) -> f64 {
    let v = scores.len();
    assert!(v > 0, "compute_loss: empty score vector");
    assert!(gold < v, "compute_loss: gold {} out of range 0..{}", gold, v);
    assert!((0.0..=1.0).contains(&eps), "compute_loss: eps {} outside [0,1]", eps);
    let uniform = eps / v as f64;
    let mut total = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        let target = if i == gold { 1.0 - eps + uniform } else { uniform };
        total += bce_with_logit(s, target);
    }
    total / v as f64
}
