//! Encoder evaluation: correlation metrics and threshold-based
//! classification for binary-label corpora.

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use super::{predict_similarity, EncoderModel};
use crate::corpus::{tokenize, PairedExample};
use crate::exec::map_ordered;

/// Margin placed below/above the extreme predictions when sweeping threshold
/// candidates.
const THRESHOLD_MARGIN: f64 = 1e-6;

/// Evaluation results for one model on one pair set.
///
/// `threshold`, `accuracy`, and `f1` are present exactly when the labels are
/// binary ({0, 1}). `degenerate` flags correlations that were defined as 0
/// because predictions or labels had no variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pearson: f64,
    pub spearman: f64,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

impl EvalReport {
    /// One-line human-readable summary.
    pub fn summary_line(&self) -> String {
        let mut line = format!("pearson={:.4} spearman={:.4}", self.pearson, self.spearman);
        if let (Some(t), Some(a), Some(f)) = (self.threshold, self.accuracy, self.f1) {
            line.push_str(&format!(
                " threshold={t:.4} accuracy={a:.2} f1={f:.2}"
            ));
        }
        if self.degenerate {
            line.push_str(" (degenerate)");
        }
        line
    }
}

/// Product-moment correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "length mismatch");
    let n = xs.len() as f64;
    if xs.is_empty() {
        return None;
    }
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x <= 0.0 || var_y <= 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}

/// 1-based ranks with ties replaced by the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("no NaN").then(a.cmp(&b)));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j share the value; average their 1-based ranks.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson of average-ranked data.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

fn confusion(preds: &[f64], labels: &[f64], threshold: f64) -> (usize, usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (p, y) in preds.iter().zip(labels) {
        let positive = *p >= threshold;
        let truth = *y == 1.0;
        match (positive, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// F1 of the rule "positive when `pred >= threshold`"; 0 when there are no
/// true positives.
pub fn f1_at(preds: &[f64], labels: &[f64], threshold: f64) -> f64 {
    let (tp, fp, fn_, _) = confusion(preds, labels, threshold);
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Accuracy (percent) of the same rule.
pub fn accuracy_at(preds: &[f64], labels: &[f64], threshold: f64) -> f64 {
    let (tp, _, _, tn) = confusion(preds, labels, threshold);
    100.0 * (tp + tn) as f64 / preds.len() as f64
}

/// Choose the decision threshold maximizing F1 on `(preds, labels)`.
///
/// Candidates are the midpoints of adjacent distinct sorted predictions plus
/// one value below the minimum and one above the maximum; ties in F1 resolve
/// to the smallest candidate. Labels must contain both classes.
pub fn select_threshold(preds: &[f64], labels: &[f64]) -> Result<f64> {
    ensure!(
        preds.len() == labels.len(),
        "length mismatch: {} preds, {} labels",
        preds.len(),
        labels.len()
    );
    ensure!(!preds.is_empty(), "empty inputs");
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    ensure!(
        positives > 0 && positives < labels.len(),
        "labels must contain both classes"
    );

    let mut distinct: Vec<f64> = preds.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    distinct.dedup();

    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0] - THRESHOLD_MARGIN);
    for pair in distinct.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(distinct[distinct.len() - 1] + THRESHOLD_MARGIN);

    let mut best = candidates[0];
    let mut best_f1 = f1_at(preds, labels, best);
    for &candidate in &candidates[1..] {
        let f1 = f1_at(preds, labels, candidate);
        if f1 > best_f1 {
            best_f1 = f1;
            best = candidate;
        }
    }
    Ok(best)
}

fn labels_are_binary(pairs: &[&PairedExample]) -> bool {
    pairs.iter().all(|e| e.label == 0.0 || e.label == 1.0)
}

fn predictions(model: &EncoderModel, pairs: &[&PairedExample]) -> (Vec<f64>, Vec<f64>) {
    let preds = map_ordered(pairs, |e| {
        predict_similarity(model, &tokenize(&e.human_text), &tokenize(&e.machine_text))
    });
    let labels = pairs.iter().map(|e| e.label).collect();
    (preds, labels)
}

/// Evaluate a model on a pair set.
///
/// Correlations are always reported (0 with the `degenerate` flag when
/// variance vanishes). When the labels are binary, the decision threshold is
/// tuned on `dev_pairs` — or, if none are supplied, on `pairs` itself — and
/// accuracy/F1 at that threshold are reported for `pairs`.
pub fn evaluate(
    model: &EncoderModel,
    pairs: &[&PairedExample],
    dev_pairs: Option<&[&PairedExample]>,
) -> Result<EvalReport> {
    ensure!(!pairs.is_empty(), "cannot evaluate on empty pairs");
    model.validate()?;
    let (preds, labels) = predictions(model, pairs);

    let p = pearson(&preds, &labels);
    let s = spearman(&preds, &labels);
    let degenerate = p.is_none() || s.is_none();

    let mut report = EvalReport {
        pearson: p.unwrap_or(0.0),
        spearman: s.unwrap_or(0.0),
        degenerate,
        threshold: None,
        accuracy: None,
        f1: None,
    };

    if labels_are_binary(pairs) && dev_pairs.map_or(true, labels_are_binary) {
        let threshold = match dev_pairs {
            Some(dev) if !dev.is_empty() => {
                let (dev_preds, dev_labels) = predictions(model, dev);
                select_threshold(&dev_preds, &dev_labels)?
            }
            _ => select_threshold(&preds, &labels)?,
        };
        report.threshold = Some(threshold);
        report.accuracy = Some(accuracy_at(&preds, &labels, threshold));
        report.f1 = Some(100.0 * f1_at(&preds, &labels, threshold));
    }
    Ok(report)
}
