//! Lexical divergence metrics and per-group analysis.
//!
//! Per-pair metrics (BLEU-N, Jaccard) are computed sentence-by-sentence and
//! arithmetic-averaged within a group; group metrics (Distinct-N, Zipf
//! coefficient) pool every sentence of the group. [`analyze`] ties them
//! together into one report per group: the human sentences, and the top and
//! bottom importance deciles of the machine sentences.
//!
//! Per-pair work may run in parallel, but all averages reduce in input
//! order, so reports are bit-stable from run to run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, PairedExample};
use crate::exec::map_ordered;

/// Sentence-level BLEU restricted to a single n-gram order, as a percent.
///
/// Clipped order-`n` precision times the brevity penalty
/// `min(1, exp(1 - |ref|/|hyp|))`. A hypothesis shorter than `n` scores 0;
/// zero matches score exactly 0 (no smoothing).
pub fn bleu_n(hypothesis: &[String], reference: &[String], n: usize) -> Result<f64> {
    ensure!(n >= 1, "n must be at least 1");
    ensure!(!hypothesis.is_empty(), "empty hypothesis");
    if hypothesis.len() < n {
        return Ok(0.0);
    }
    let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in hypothesis.windows(n) {
        *hyp_counts.entry(gram).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in reference.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let matched: usize = hyp_counts
        .iter()
        .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = hypothesis.len() - n + 1;
    let precision = matched as f64 / total as f64;
    let bp = (1.0 - reference.len() as f64 / hypothesis.len() as f64)
        .exp()
        .min(1.0);
    Ok(100.0 * bp * precision)
}

/// Jaccard similarity of the token *sets* of two sentences, as a percent.
/// Two empty sets are defined as identical (100).
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 100.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    100.0 * inter as f64 / union as f64
}

/// Distinct n-grams over total n-gram occurrences, pooled across the whole
/// group, as a percent. Errors if no sentence is at least `n` tokens long.
pub fn distinct_n(group: &[Vec<String>], n: usize) -> Result<f64> {
    ensure!(n >= 1, "n must be at least 1");
    let mut total = 0usize;
    let mut seen: HashSet<&[String]> = HashSet::new();
    for sentence in group {
        for gram in sentence.windows(n) {
            total += 1;
            seen.insert(gram);
        }
    }
    ensure!(
        total > 0,
        "distinct-{n} undefined: no sentence has at least {n} tokens"
    );
    Ok(100.0 * seen.len() as f64 / total as f64)
}

/// Zipf coefficient of the pooled unigram distribution of a group.
///
/// Ranks tokens by descending frequency (ties broken by token order) and
/// fits `frequency ~ rank^(-s)` by ordinary least squares on the log-log
/// rank/frequency points. Requires at least 10 distinct tokens.
pub fn zipf_coefficient(group: &[Vec<String>]) -> Result<f64> {
    let mut counts: BTreeMap<&String, u64> = BTreeMap::new();
    for sentence in group {
        for token in sentence {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let freqs: Vec<u64> = counts.values().copied().collect();
    zipf_from_counts(&freqs)
}

/// Zipf fit on raw token frequencies (one count per distinct token; the
/// caller's ordering resolves rank ties among equal counts).
pub fn zipf_from_counts(counts: &[u64]) -> Result<f64> {
    ensure!(
        counts.len() >= 10,
        "zipf coefficient requires at least 10 distinct tokens, got {}",
        counts.len()
    );
    let mut sorted: Vec<u64> = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= 1)
        .map(|(i, &f)| ((i as f64 + 1.0).ln(), (f as f64).ln()))
        .collect();
    ensure!(points.len() >= 2, "zipf fit needs at least two ranks");
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    Ok(-(num / den))
}

/// A paired example together with the importance score of its machine side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub example: PairedExample,
    pub importance: f64,
}

/// Split scored pairs into the top and bottom `fraction` by importance.
///
/// Sorting is descending by importance with a stable tie-break on example
/// id, so the grouping depends only on ranks. Each side holds
/// `max(1, floor(fraction * len))` pairs; the two sides must not overlap.
pub fn group_by_importance(
    scored: &[ScoredPair],
    fraction: f64,
) -> Result<(Vec<ScoredPair>, Vec<ScoredPair>)> {
    ensure!(!scored.is_empty(), "no scored pairs to group");
    ensure!(
        fraction > 0.0 && fraction <= 0.5,
        "fraction must be in (0, 0.5], got {fraction}"
    );
    let n = scored.len();
    let k = ((fraction * n as f64).floor() as usize).max(1);
    ensure!(
        2 * k <= n,
        "top and bottom groups of {k} overlap in {n} pairs"
    );
    let mut ordered: Vec<&ScoredPair> = scored.iter().collect();
    ordered.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .expect("importance is never NaN")
            .then_with(|| a.example.id.cmp(&b.example.id))
    });
    let top = ordered[..k].iter().map(|p| (*p).clone()).collect();
    let bottom = ordered[n - k..].iter().map(|p| (*p).clone()).collect();
    Ok((top, bottom))
}

/// Which sentences a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Human,
    TopDecile,
    BottomDecile,
    Custom,
}

impl GroupKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GroupKind::Human => "human",
            GroupKind::TopDecile => "top_decile",
            GroupKind::BottomDecile => "bottom_decile",
            GroupKind::Custom => "custom",
        }
    }
}

/// BLEU-1..4 averages plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    pub per_n: [f64; 4],
    pub mean: f64,
}

/// Distinct-1..3 values plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctBreakdown {
    pub per_n: [f64; 3],
    pub mean: f64,
}

/// Lexical metrics for one sentence group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: GroupKind,
    pub bleu: BleuBreakdown,
    pub jaccard: f64,
    pub distinct: DistinctBreakdown,
    pub zipf: f64,
}

/// Per-pair metric rows for a group: BLEU-1..4 and Jaccard of (hypothesis,
/// reference), averaged in input order.
fn pair_metrics(pairs: &[(Vec<String>, Vec<String>)]) -> Result<(BleuBreakdown, f64)> {
    ensure!(!pairs.is_empty(), "empty group");
    let rows: Vec<Result<([f64; 4], f64)>> = map_ordered(pairs, |(hyp, reference)| {
        let mut bleu = [0.0; 4];
        for (i, slot) in bleu.iter_mut().enumerate() {
            *slot = bleu_n(hyp, reference, i + 1)?;
        }
        Ok((bleu, jaccard(hyp, reference)))
    });
    let mut bleu_sum = [0.0f64; 4];
    let mut jaccard_sum = 0.0f64;
    for row in rows {
        let (bleu, jac) = row?;
        for (s, b) in bleu_sum.iter_mut().zip(bleu) {
            *s += b;
        }
        jaccard_sum += jac;
    }
    let count = pairs.len() as f64;
    let per_n = bleu_sum.map(|s| s / count);
    let mean = per_n.iter().sum::<f64>() / 4.0;
    Ok((BleuBreakdown { per_n, mean }, jaccard_sum / count))
}

fn group_report(
    kind: GroupKind,
    pairs: &[(Vec<String>, Vec<String>)],
) -> Result<GroupReport> {
    let (bleu, jaccard) = pair_metrics(pairs)?;
    let pooled: Vec<Vec<String>> = pairs.iter().map(|(hyp, _)| hyp.clone()).collect();
    let mut per_n = [0.0f64; 3];
    for (i, slot) in per_n.iter_mut().enumerate() {
        *slot = distinct_n(&pooled, i + 1)?;
    }
    let distinct = DistinctBreakdown {
        per_n,
        mean: per_n.iter().sum::<f64>() / 3.0,
    };
    let zipf = zipf_coefficient(&pooled)?;
    Ok(GroupReport {
        group: kind,
        bleu,
        jaccard,
        distinct,
        zipf,
    })
}

/// Compute the three-group lexical report for a corpus.
///
/// `scored` must carry exactly one importance per corpus example. The human
/// group scores every `x_h` against its paired `x_m`; the machine groups
/// score the top and bottom `fraction` of machine sentences (by importance)
/// against their paired human sentences.
pub fn analyze(
    corpus: &Corpus,
    scored: &[ScoredPair],
    fraction: f64,
) -> Result<Vec<GroupReport>> {
    let corpus_ids: HashSet<&str> = corpus.examples().iter().map(|e| e.id.as_str()).collect();
    let scored_ids: HashSet<&str> = scored.iter().map(|p| p.example.id.as_str()).collect();
    ensure!(
        scored.len() == corpus.len() && corpus_ids == scored_ids,
        "scores must cover every machine sentence of the corpus exactly once"
    );

    let human_pairs: Vec<(Vec<String>, Vec<String>)> = corpus
        .examples()
        .iter()
        .map(|e| (tokenize(&e.human_text), tokenize(&e.machine_text)))
        .collect();
    let machine_group = |pairs: &[ScoredPair]| -> Vec<(Vec<String>, Vec<String>)> {
        pairs
            .iter()
            .map(|p| {
                (
                    tokenize(&p.example.machine_text),
                    tokenize(&p.example.human_text),
                )
            })
            .collect()
    };
    let (top, bottom) = group_by_importance(scored, fraction)?;
    Ok(vec![
        group_report(GroupKind::Human, &human_pairs)?,
        group_report(GroupKind::TopDecile, &machine_group(&top))?,
        group_report(GroupKind::BottomDecile, &machine_group(&bottom))?,
    ])
}

/// Reports keyed by group and metric, for machine consumption.
pub fn report_json(reports: &[GroupReport]) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    for r in reports {
        obj.insert(
            r.group.as_str().to_string(),
            serde_json::json!({
                "bleu": {
                    "1": r.bleu.per_n[0],
                    "2": r.bleu.per_n[1],
                    "3": r.bleu.per_n[2],
                    "4": r.bleu.per_n[3],
                    "mean": r.bleu.mean,
                },
                "jaccard": r.jaccard,
                "distinct": {
                    "1": r.distinct.per_n[0],
                    "2": r.distinct.per_n[1],
                    "3": r.distinct.per_n[2],
                    "mean": r.distinct.mean,
                },
                "zipf": r.zipf,
            }),
        );
    }
    serde_json::Value::Object(obj)
}

/// Aligned plain-text table, one metric per row and one group per column.
pub fn report_table(reports: &[GroupReport]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<14}", "metric");
    for r in reports {
        let _ = write!(out, "{:>15}", r.group.as_str());
    }
    out.push('\n');
    let mut row = |label: &str, values: Vec<f64>| {
        let _ = write!(out, "{label:<14}");
        for v in values {
            let _ = write!(out, "{v:>15.2}");
        }
        out.push('\n');
    };
    for n in 0..4 {
        row(
            &format!("BLEU-{}", n + 1),
            reports.iter().map(|r| r.bleu.per_n[n]).collect(),
        );
    }
    row("BLEU-N", reports.iter().map(|r| r.bleu.mean).collect());
    row("Jaccard", reports.iter().map(|r| r.jaccard).collect());
    for n in 0..3 {
        row(
            &format!("Distinct-{}", n + 1),
            reports.iter().map(|r| r.distinct.per_n[n]).collect(),
        );
    }
    row(
        "Distinct-N",
        reports.iter().map(|r| r.distinct.mean).collect(),
    );
    row("Zipf coeff.", reports.iter().map(|r| r.zipf).collect());
    out
}
