use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::diffusion::Distributions;

/// Probabilities are clipped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// A replacement applied during rewriting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub step: usize,
    pub position: usize,
    pub old: TokenId,
    pub new: TokenId,
    pub margin: f64,
    pub instability: f64,
    /// Probability of `new` under the re-masked context.
    pub probability: f64,
}

/// Gap between the two largest probabilities of a row.
pub fn margin(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in row {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    if second.is_finite() { first - second } else { first.max(0.0) }
}

/// Margins of the committed positions, in position order.
pub fn margins(dists: &Distributions, committed: &[usize]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = committed.iter().map(|&i| (i, margin(dists.row(i)))).collect();
    out.sort_by_key(|&(i, _)| i);
    out
}

/// The `m` positions with the smallest margin (lower position wins ties),
/// returned in position order.
pub fn select_candidates(margins: &[(usize, f64)], m: usize) -> Vec<usize> {
    let mut ranked = margins.to_vec();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = ranked.into_iter().take(m).map(|(i, _)| i).collect();
    picked.sort_unstable();
    picked
}

/// Negative log-probability with clipping.
pub fn instability(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Instability of each candidate's current token under the perturbed pass.
pub fn instabilities(perturbed: &Distributions, tokens: &[TokenId], candidates: &[usize]) -> Vec<(usize, f64)> {
    candidates
        .iter()
        .map(|&i| (i, instability(perturbed.row(i)[tokens[i] as usize])))
        .collect()
}

/// Highest-probability token among `allowed`, lower id on ties.
pub(crate) fn best_allowed(row: &[f64], allowed: &[bool]) -> (TokenId, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &p) in row.iter().enumerate() {
        if allowed[j] && p > best.1 {
            best = (j as TokenId, p);
        }
    }
    best
}

/// A replacement considered for one of the most unstable candidates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Proposal {
    pub position: usize,
    pub old: TokenId,
    pub proposed: TokenId,
    pub probability: f64,
    pub instability: f64,
    pub accepted: bool,
}

/// Considers the `k` most unstable candidates (lower position wins ties) and
/// accepts a replacement only when the perturbed prediction changes and is
/// at least `threshold` likely.
pub fn select_revisions(
    instabilities: &[(usize, f64)],
    perturbed: &Distributions,
    tokens: &[TokenId],
    allowed: &[bool],
    k: usize,
    threshold: f64,
) -> Vec<(usize, TokenId, f64)> {
    proposals(instabilities, perturbed, tokens, allowed, k, threshold)
        .into_iter()
        .filter(|p| p.accepted)
        .map(|p| (p.position, p.proposed, p.probability))
        .collect()
}

pub(crate) fn proposals(
    instabilities: &[(usize, f64)],
    perturbed: &Distributions,
    tokens: &[TokenId],
    allowed: &[bool],
    k: usize,
    threshold: f64,
) -> Vec<Proposal> {
    let mut ranked = instabilities.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(i, score)| {
            let (proposed, probability) = best_allowed(perturbed.row(i), allowed);
            Proposal {
                position: i,
                old: tokens[i],
                proposed,
                probability,
                instability: score,
                accepted: proposed != tokens[i] && probability >= threshold,
            }
        })
        .collect()
}
