use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::metrics::{cosine, eer, roc_curve, RocPoint};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub a: String,
    pub b: String,
    pub same: bool,
}

/// Verification pairs grouped into folds; every fold is non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    pub folds: Vec<Vec<PairSpec>>,
}

/// Parses `pathA pathB same(0|1)` lines; blank lines separate folds.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Protocol> {
    let mut folds = vec![Vec::new()];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !folds.last().expect("never empty").is_empty() {
                folds.push(Vec::new());
            }
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        let [a, b, same] = f[..] else {
            return Err(err(format!("expected `pathA pathB 0|1`, found {} fields", f.len())));
        };
        let same = match same {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
        };
        folds.last_mut().expect("never empty").push(PairSpec {
            a: a.into(),
            b: b.into(),
            same,
        });
    }
    if folds.last().is_some_and(|f| f.is_empty()) {
        folds.pop();
    }
    Ok(Protocol { folds })
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Protocol> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

/// Cosine score and label of every pair, fold by fold.
pub fn score_protocol<T: Element>(
    protocol: &Protocol,
    embeddings: &HashMap<String, Tensor<T>>,
) -> Result<Vec<Vec<(f64, bool)>>> {
    let lookup = |name: &String| {
        embeddings
            .get(name)
            .ok_or_else(|| Error::MissingEmbedding(name.clone()))
    };
    protocol
        .folds
        .iter()
        .map(|fold| {
            fold.par_iter()
                .map(|p| {
                    let (a, b) = (lookup(&p.a)?, lookup(&p.b)?);
                    if a.numel() != b.numel() {
                        return Err(Error::InvalidEmbedding(format!("{} and {} differ in length", p.a, p.b)));
                    }
                    Ok((cosine(a.data(), b.data())?, p.same))
                })
                .collect()
        })
        .collect()
}

/// Threshold maximizing accuracy of `score >= t ⇒ same` over `scores`.
///
/// Candidates are the distinct scores and `+inf`; ties go to the smallest
/// candidate. Returns `(threshold, correct count)`.
pub fn best_threshold(scores: &[(f64, bool)]) -> (f64, usize) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let neg = sorted.iter().filter(|s| !s.1).count();
    let (mut best_t, mut best) = (f64::INFINITY, neg);
    let (mut tp, mut fp) = (0, 0);
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
        let correct = tp + neg - fp;
        if correct >= best {
            (best_t, best) = (s, correct);
        }
    }
    (best_t, best)
}

pub fn accuracy_at(scores: &[(f64, bool)], threshold: f64) -> f64 {
    let correct = scores.iter().filter(|(s, same)| (*s >= threshold) == *same).count();
    correct as f64 / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub accuracy: f64,
    /// Chosen on the other folds.
    pub threshold: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub mean: f64,
    pub folds: Vec<FoldResult>,
}

/// Leave-one-fold-out accuracy: each fold is scored with the best threshold
/// of the remaining folds.
pub fn fold_accuracy_scores(folds: &[Vec<(f64, bool)>]) -> Result<FoldReport> {
    if folds.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 folds, got {}",
            folds.len()
        )));
    }
    if folds.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidInput("empty fold".into()));
    }
    let results: Vec<FoldResult> = (0..folds.len())
        .map(|k| {
            let train: Vec<(f64, bool)> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let (threshold, _) = best_threshold(&train);
            FoldResult {
                accuracy: accuracy_at(&folds[k], threshold),
                threshold,
                pairs: folds[k].len(),
            }
        })
        .collect();
    let mean = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    Ok(FoldReport { mean, folds: results })
}

pub fn fold_accuracy<T: Element>(protocol: &Protocol, embeddings: &HashMap<String, Tensor<T>>) -> Result<FoldReport> {
    fold_accuracy_scores(&score_protocol(protocol, embeddings)?)
}

/// Fold accuracy, ROC over all pairs and its EER.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub folds: FoldReport,
    pub roc: Vec<RocPoint>,
    pub eer: f64,
}

impl VerificationReport {
    /// `fold,accuracy,threshold` rows and a closing `mean,<accuracy>,` row.
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("fold,accuracy,threshold\n");
        for (i, f) in self.folds.folds.iter().enumerate() {
            writeln!(out, "{},{},{}", i + 1, f.accuracy, f.threshold).expect("String write");
        }
        writeln!(out, "mean,{},", self.folds.mean).expect("String write");
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.roc {
            writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr).expect("String write");
        }
        out
    }

    /// Writes `folds.csv` and `roc.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("folds.csv", self.folds_csv()), ("roc.csv", self.roc_csv())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

pub fn verify<T: Element>(protocol: &Protocol, embeddings: &HashMap<String, Tensor<T>>) -> Result<VerificationReport> {
    let scores = score_protocol(protocol, embeddings)?;
    let all: Vec<(f64, bool)> = scores.iter().flatten().copied().collect();
    let roc = roc_curve(&all)?;
    let eer = eer(&roc)?;
    Ok(VerificationReport {
        folds: fold_accuracy_scores(&scores)?,
        roc,
        eer,
    })
}
