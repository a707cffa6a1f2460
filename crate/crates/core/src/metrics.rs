//! Confusion counts, precision/recall/F1, ROC and AUC.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fmt::sig9;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "metrics",
            detail: format!("{} scores, {} labels", scores.len(), labels.len()),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Input(format!("score {i} is not finite")));
    }
    Ok(())
}

/// A score at or above `threshold` is a positive prediction.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_lengths(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(precision, recall, f1)`; an empty denominator gives 0.
pub fn prf1(tp: u64, fp: u64, _tn: u64, fn_: u64) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    // 2PR/(P+R) rewritten over counts: one rounding, exact for small counts.
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    (p, r, f1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// `None` for the two endpoints.
    pub threshold: Option<f64>,
}

fn class_counts(labels: &[bool]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Input(format!(
            "ROC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Sweeps distinct scores from high to low. Tied scores move the curve in a
/// single diagonal step.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if i < order.len() {
            points.push(RocPoint {
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
                threshold: Some(s),
            });
        }
    }
    points.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        threshold: None,
    });
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    // Twice the credit, so everything stays integral.
    let mut credit: u64 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            credit += match si.partial_cmp(&sj) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(credit as f64 / (2 * pos * neg) as f64)
}

/// AUC straight from scores, via the ROC curve.
pub fn auc_of_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(auc(&roc_curve(scores, labels)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: u64,
    pub positives: u64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
}

pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    let c = confusion(scores, labels, threshold)?;
    let (precision, recall, f1) = prf1(c.tp, c.fp, c.tn, c.fn_);
    let roc = roc_curve(scores, labels)?;
    Ok(EvalReport {
        n: c.total(),
        positives: c.tp + c.fn_,
        threshold,
        confusion: c,
        precision,
        recall,
        f1,
        auc: auc(&roc),
        roc,
    })
}

/// `fpr,tpr,threshold`, threshold blank at the endpoints.
pub fn write_roc_csv(path: &Path, points: &[RocPoint]) -> Result<()> {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        let t = p.threshold.map(sig9).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", sig9(p.fpr), sig9(p.tpr), t));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
