//! Binary-classification metrics: confusion counts, accuracy, recall,
//! precision/F1, ROC curves, and trapezoidal AUC. Positive means abnormal
//! traffic. All functions are pure.

use crate::error::{Error, Result};

/// Confusion-matrix counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Threshold sweep from predict-nothing (0,0) to predict-everything (1,1);
/// both rates are non-decreasing along the list.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Tally with the ≥ convention: a score equal to the threshold predicts
/// positive.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument {
            what: "confusion inputs",
            details: format!("{} scores vs {} labels", scores.len(), labels.len()),
        });
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument {
            what: "label",
            details: format!("labels must be 0 or 1, got {bad}"),
        });
    }
    let mut c = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// (tp+tn) / total.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("accuracy of zero samples"));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// tp / (tp+fn); errors when there are no positive samples.
pub fn recall(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall with no positive samples"));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Precision and F1. F1 takes the conventional value 0 when tp = 0 while
/// errors remain; only the fully degenerate case (both denominators zero)
/// is an error.
pub fn precision_f1(c: &ConfusionCounts) -> Result<(f64, f64)> {
    if c.tp + c.fp == 0 && c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("precision/F1 with no positives predicted or present"));
    }
    let precision = if c.tp + c.fp > 0 { c.tp as f64 / (c.tp + c.fp) as f64 } else { 0.0 };
    let f1 = if c.tp == 0 {
        0.0
    } else {
        let r = c.tp as f64 / (c.tp + c.fn_) as f64;
        2.0 * precision * r / (precision + r)
    };
    Ok((precision, f1))
}

/// Threshold sweep over the distinct scores in descending order, plus a
/// predict-nothing sentinel at +∞. Tied scores collapse into a single step.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument {
            what: "roc inputs",
            details: format!("{} scores vs {} labels", scores.len(), labels.len()),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC requires both classes"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume every sample tied at this threshold in one step.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal integral of TPR over FPR.
pub fn auc(curve: &RocCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::InvalidArgument {
            what: "roc curve",
            details: "needs at least two points".into(),
        });
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    Ok(area)
}

/// Convenience: ROC then AUC.
pub fn auc_from_scores(scores: &[f64], labels: &[u8]) -> Result<f64> {
    auc(&roc_curve(scores, labels)?)
}
