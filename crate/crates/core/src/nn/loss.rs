//! Binary cross-entropy over per-batch probabilities.

use crate::error::{Error, Result};
use crate::nn::mlp::SCORE_CLAMP;

/// Mean BCE loss and its exact gradient with respect to each score.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub score_grads: Vec<f64>,
}

/// Mean of −[y·ln(s) + (1−y)·ln(1−s)]. Scores at exactly 0 or 1 are clamped
/// to [1e-12, 1−1e-12] before the logs.
pub fn bce_loss(scores: &[f64], labels: &[u8]) -> Result<LossGrad> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "bce_loss",
            axis: "batch",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("bce_loss: no scores"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument {
            what: "label",
            details: format!("labels must be 0 or 1, got {bad}"),
        });
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut score_grads = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        let s = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
        let y = f64::from(y);
        loss -= y * s.ln() + (1.0 - y) * (1.0 - s).ln();
        score_grads.push((s - y) / (s * (1.0 - s)) / n);
    }
    Ok(LossGrad { loss: loss / n, score_grads })
}
