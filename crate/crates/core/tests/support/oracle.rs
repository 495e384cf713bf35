//! Exhaustive reference implementations for verification metrics.
//!
//! Every threshold is evaluated by direct counting; nothing is shared with
//! the sweep-based library code.

#![allow(dead_code)]

pub fn distinct_desc(scores: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.iter().map(|s| s.0).collect();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// `(fpr, tpr)` when predicting "same" for `score >= t`.
pub fn rates(scores: &[(f64, bool)], t: f64) -> (f64, f64) {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    let tp = scores.iter().filter(|s| s.1 && s.0 >= t).count() as f64;
    let fp = scores.iter().filter(|s| !s.1 && s.0 >= t).count() as f64;
    (fp / neg, tp / pos)
}

/// Scans every pair of consecutive thresholds (including ±inf) for the
/// segment on which `fpr − (1 − tpr)` changes sign and interpolates there.
pub fn brute_eer(scores: &[(f64, bool)]) -> f64 {
    let mut thresholds = vec![f64::INFINITY];
    thresholds.extend(distinct_desc(scores));
    thresholds.push(f64::NEG_INFINITY);
    let pts: Vec<(f64, f64)> = thresholds.iter().map(|&t| rates(scores, t)).collect();
    for w in pts.windows(2) {
        let (f0, n0) = (w[0].0, 1.0 - w[0].1);
        let (f1, n1) = (w[1].0, 1.0 - w[1].1);
        if f0 == n0 {
            return f0;
        }
        if f0 < n0 && f1 >= n1 {
            // Solve f0 + t(f1 − f0) = n0 + t(n1 − n0).
            let t = (n0 - f0) / ((f1 - f0) - (n1 - n0));
            return f0 + t * (f1 - f0);
        }
    }
    panic!("no equal-error crossing");
}

pub fn accuracy(scores: &[(f64, bool)], t: f64) -> f64 {
    scores.iter().filter(|s| (s.0 >= t) == s.1).count() as f64 / scores.len() as f64
}

/// Threshold among the distinct scores and `+inf` with the highest accuracy,
/// smallest on ties.
pub fn brute_best_threshold(scores: &[(f64, bool)]) -> f64 {
    let mut candidates = distinct_desc(scores);
    candidates.push(f64::INFINITY);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for t in candidates {
        let a = accuracy(scores, t);
        if a > best.0 {
            best = (a, t);
        }
    }
    best.1
}

/// Leave-one-fold-out accuracies.
pub fn brute_fold_accuracy(folds: &[Vec<(f64, bool)>]) -> Vec<f64> {
    (0..folds.len())
        .map(|k| {
            let train: Vec<(f64, bool)> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.clone())
                .collect();
            accuracy(&folds[k], brute_best_threshold(&train))
        })
        .collect()
}

/// Best accuracy any single threshold achieves on `scores` itself.
pub fn oracle_accuracy(scores: &[(f64, bool)]) -> f64 {
    accuracy(scores, brute_best_threshold(scores))
}
