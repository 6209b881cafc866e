use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{extract_findings, FindingVector, Observation};

/// Cumulative sentence BLEU-1..=`max_n` with brevity penalty. A zero
/// n-gram match count is replaced by `1 / (2 * candidate length)`.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], max_n: usize) -> Vec<f64> {
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if c.is_empty() || max_n == 0 {
        return vec![0.0; max_n];
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    let floor = 1.0 / (2.0 * c.len() as f64);
    let mut log_sum = 0.0;
    (1..=max_n)
        .map(|n| {
            let p = modified_precision(&c, &r, n);
            log_sum += if p > 0.0 { p } else { floor }.ln();
            bp * (log_sum / n as f64).exp()
        })
        .collect()
}

fn ngram_counts<'s, 'a>(tokens: &'s [&'a str], n: usize) -> HashMap<&'s [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn modified_precision(c: &[&str], r: &[&str], n: usize) -> f64 {
    if c.len() < n {
        return 0.0;
    }
    let reference = ngram_counts(r, n);
    let matched: usize = ngram_counts(c, n)
        .iter()
        .map(|(g, &k)| k.min(reference.get(g).copied().unwrap_or(0)))
        .sum();
    matched as f64 / (c.len() + 1 - n) as f64
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Recall-leaning longest-common-subsequence F-measure.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    const BETA: f64 = 1.2;
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    (1.0 + BETA * BETA) * p * r / (r + BETA * BETA * p)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClinicalScores {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClinicalScores {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClinicalScores { true_positives: tp, false_positives: fp, false_negatives: fn_, precision, recall, f1 }
    }
}

/// Micro-averaged slot-level finding scores. A slot is a true positive when
/// the extracted and reference findings name the same observation. With
/// `subset`, observations outside it are ignored on both sides.
pub fn clinical_scores(predicted: &[FindingVector], references: &[FindingVector], subset: Option<&[Observation]>) -> ClinicalScores {
    let keep = |o: Option<Observation>| o.filter(|o| subset.is_none_or(|s| s.contains(o)));
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (pred, gold) in predicted.iter().zip(references) {
        for ((_, p), (_, g)) in pred.iter().zip(gold.iter()) {
            match (keep(p.observation()), keep(g.observation())) {
                (Some(a), Some(b)) if a == b => tp += 1,
                (Some(_), Some(_)) => {
                    fp += 1;
                    fn_ += 1;
                }
                (Some(_), None) => fp += 1,
                (None, Some(_)) => fn_ += 1,
                (None, None) => {}
            }
        }
    }
    ClinicalScores::from_counts(tp, fp, fn_)
}

/// Scores generated report texts against reference conditions.
pub fn clinical_f1<S: AsRef<str>>(reports: &[Vec<S>], references: &[FindingVector], subset: Option<&[Observation]>) -> ClinicalScores {
    let predicted: Vec<FindingVector> = reports.iter().map(|r| extract_findings(r)).collect();
    clinical_scores(&predicted, references, subset)
}
