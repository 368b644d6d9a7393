//! Loss heads and their gradients with respect to network outputs.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vector {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against class `target`, and its logit gradient.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vector)> {
    if target >= logits.len() {
        return Err(Error::dim(format!("class {target} with {} logits", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_total - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Binary hinge `max(0, margin - y * s)` with `y` in {-1, +1}; gradient is 0 at the kink.
pub fn hinge(score: f64, label: f64, margin: f64) -> (f64, f64) {
    let slack = margin - label * score;
    if slack > 0.0 {
        (slack, -label)
    } else {
        (0.0, 0.0)
    }
}

fn check_pair(x_i: &[f64], x_j: &[f64], alpha: f64) -> Result<()> {
    if x_i.len() != x_j.len() {
        return Err(Error::dim(format!(
            "embeddings of length {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

/// Asymmetric order penalty `|| max(0, alpha - (x_j - x_i)) ||^2` for `i` placed before `j`.
pub fn order_pair_loss(x_i: &[f64], x_j: &[f64], alpha: f64) -> Result<f64> {
    check_pair(x_i, x_j, alpha)?;
    Ok(x_i
        .iter()
        .zip(x_j)
        .map(|(a, b)| {
            let r = alpha - (b - a);
            if r > 0.0 {
                r * r
            } else {
                0.0
            }
        })
        .sum())
}

/// Order penalty summed over all pairs of `embeddings` (given in gold order), plus the
/// gradient with respect to each embedding.
pub fn order_story_loss(embeddings: &[Vector], alpha: f64) -> Result<(f64, Vec<Vector>)> {
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut grads = vec![vec![0.0; dim]; embeddings.len()];
    let mut loss = 0.0;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            check_pair(&embeddings[i], &embeddings[j], alpha)?;
            for k in 0..dim {
                let r = alpha - (embeddings[j][k] - embeddings[i][k]);
                if r > 0.0 {
                    loss += r * r;
                    grads[i][k] += 2.0 * r;
                    grads[j][k] -= 2.0 * r;
                }
            }
        }
    }
    Ok((loss, grads))
}
