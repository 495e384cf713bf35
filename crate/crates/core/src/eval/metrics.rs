use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `a·b / (‖a‖‖b‖)`, accumulated in f64.
pub fn cosine_similarity<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.numel() != b.numel() {
        return Err(Error::shape(format!(
            "embedding lengths differ: {} vs {}",
            a.numel(),
            b.numel()
        )));
    }
    cosine(a.data(), b.data())
}

pub(crate) fn cosine<T: Element>(a: &[T], b: &[T]) -> Result<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if !(aa > 0.0 && bb > 0.0) || !(aa.is_finite() && bb.is_finite()) {
        return Err(Error::InvalidEmbedding("zero-norm or non-finite embedding".into()));
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// One operating point: predict "same" when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Threshold sweep from `+inf` (the `(0, 0)` endpoint) through every
/// distinct score in descending order to `-inf` (the `(1, 1)` endpoint).
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = scores.iter().filter(|(_, same)| *same).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateInput(format!(
            "ROC needs both classes, got {pos} positive and {neg} negative pairs"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    curve.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(curve)
}

/// Trapezoidal area under the curve.
pub fn auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Error rate where `fpr = 1 − tpr`, linearly interpolated between the two
/// adjacent sweep points that bracket the crossing.
pub fn eer(roc: &[RocPoint]) -> Result<f64> {
    let degenerate = |m: &str| Err(Error::DegenerateInput(m.into()));
    if roc.len() < 2 {
        return degenerate("ROC has fewer than two points");
    }
    if roc.windows(2).any(|w| w[1].fpr < w[0].fpr || w[1].tpr < w[0].tpr) {
        return degenerate("ROC is not monotone along the sweep");
    }
    // d = fpr − fnr rises from −1 at (0, 0) to +1 at (1, 1).
    let d = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    if d(&roc[0]) > 0.0 {
        return degenerate("ROC does not start below the equal-error line");
    }
    for w in roc.windows(2) {
        let (d0, d1) = (d(&w[0]), d(&w[1]));
        if d0 == 0.0 {
            return Ok(w[0].fpr);
        }
        if d1 >= 0.0 {
            let t = -d0 / (d1 - d0);
            return Ok(w[0].fpr + t * (w[1].fpr - w[0].fpr));
        }
    }
    degenerate("ROC never reaches the equal-error line")
}
