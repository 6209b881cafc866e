//! Forward corruption with per-token masking exponents, and the weighted
//! masked-reconstruction objective.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorLevel, HierarchyConfig, TokenAnnotation};
use crate::corpus::{TokenId, Vocab};
use crate::{Error, Result};

/// Noise levels are drawn from `(NOISE_EPS, 1 - NOISE_EPS)`.
pub const NOISE_EPS: f64 = 1e-4;

/// Tolerance on the sum of each predicted distribution.
pub const NORMALIZATION_TOL: f64 = 1e-5;

pub fn sample_noise_level<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let t: f64 = rng.random_range(NOISE_EPS..1.0 - NOISE_EPS);
        if t > NOISE_EPS {
            return t;
        }
    }
}

/// How hierarchy annotations feed masking and weighting during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationMode {
    /// Uniform masking, uniform weights.
    #[serde(rename = "baseline")]
    Baseline,
    /// Uniform masking, hierarchical weights.
    #[serde(rename = "um")]
    UniformMasking,
    /// Protection and weighting only for anatomy tokens.
    #[serde(rename = "l0-only")]
    AnatomyOnly,
    /// Hierarchical masking and weighting at every level.
    #[serde(rename = "full")]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Baseline,
        AblationMode::UniformMasking,
        AblationMode::AnatomyOnly,
        AblationMode::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Baseline => "baseline",
            AblationMode::UniformMasking => "um",
            AblationMode::AnatomyOnly => "l0-only",
            AblationMode::Full => "full",
        }
    }

    pub fn annotation(self, level: AnchorLevel, config: &HierarchyConfig) -> TokenAnnotation {
        let full = TokenAnnotation::new(level, config);
        let neutral = TokenAnnotation {
            level,
            ..TokenAnnotation::NEUTRAL
        };
        match self {
            AblationMode::Baseline => neutral,
            AblationMode::UniformMasking => TokenAnnotation { phi: 1.0, ..full },
            AblationMode::AnatomyOnly if level == AnchorLevel::Anatomy => full,
            AblationMode::AnatomyOnly => neutral,
            AblationMode::Full => full,
        }
    }

    pub fn annotate(self, annotations: &[TokenAnnotation], config: &HierarchyConfig) -> Vec<TokenAnnotation> {
        annotations
            .iter()
            .map(|a| self.annotation(a.level, config))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedSequence {
    pub tokens: Vec<TokenId>,
    /// Masked positions, ascending.
    pub masked: Vec<usize>,
    pub noise_level: f64,
}

impl CorruptedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Masks each maskable position independently with probability
/// `t^phi(i)`, redrawing the whole vector until at least one position is
/// masked. Reserved tokens (`[PAD]`, `[EOS]`, prefix placeholders) are never
/// masked.
pub fn corrupt<R: Rng + ?Sized>(
    tokens: &[TokenId],
    annotations: &[TokenAnnotation],
    vocab: &Vocab,
    t: f64,
    rng: &mut R,
) -> Result<CorruptedSequence> {
    if tokens.len() != annotations.len() {
        return Err(Error::Contract(format!(
            "{} tokens but {} annotations",
            tokens.len(),
            annotations.len()
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Contract(format!("noise level {t} outside (0, 1)")));
    }
    let probs: Vec<Option<f64>> = tokens
        .iter()
        .zip(annotations)
        .map(|(&tok, a)| (!vocab.is_reserved(tok)).then(|| t.powf(a.phi)))
        .collect();
    if probs.iter().all(Option::is_none) {
        return Err(Error::Contract("sequence has no maskable position".into()));
    }
    let masked = loop {
        let draw: Vec<usize> = probs
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.filter(|&p| rng.random_bool(p)).map(|_| i))
            .collect();
        if !draw.is_empty() {
            break draw;
        }
    };
    let mut out = tokens.to_vec();
    for &i in &masked {
        out[i] = vocab.mask();
    }
    Ok(CorruptedSequence {
        tokens: out,
        masked,
        noise_level: t,
    })
}

/// Row-major per-position probability distributions in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Distributions {
    vocab: usize,
    data: Vec<f64>,
}

impl Distributions {
    pub fn new(vocab: usize, data: Vec<f64>) -> Self {
        assert!(vocab > 0 && data.len().is_multiple_of(vocab));
        Distributions { vocab, data }
    }

    /// Numerically stable softmax over each row of `logits`.
    pub fn softmax<T: Copy + Into<f64>>(vocab: usize, logits: &[T]) -> Self {
        let mut data: Vec<f64> = logits.iter().map(|&x| x.into()).collect();
        for row in data.chunks_mut(vocab) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        Distributions { vocab, data }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionLoss {
    pub cross_entropy: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_position: BTreeMap<usize, PositionLoss>,
}

fn checked_row(dists: &Distributions, i: usize) -> Result<&[f64]> {
    if i >= dists.len() {
        return Err(Error::Contract(format!("no distribution for masked position {i}")));
    }
    let row = dists.row(i);
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL || row.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Numerical(format!(
            "distribution at position {i} sums to {sum}"
        )));
    }
    Ok(row)
}

/// `sum_{i in masked} w(i) * -ln p(y_i)`. Unmasked positions contribute nothing.
pub fn weighted_loss(
    dists: &Distributions,
    targets: &[TokenId],
    corrupted: &CorruptedSequence,
    annotations: &[TokenAnnotation],
) -> Result<LossBreakdown> {
    let mut out = LossBreakdown::default();
    for &i in &corrupted.masked {
        let row = checked_row(dists, i)?;
        let target = *targets
            .get(i)
            .ok_or_else(|| Error::Contract(format!("no target for position {i}")))?;
        let weight = annotations
            .get(i)
            .ok_or_else(|| Error::Contract(format!("no annotation for position {i}")))?
            .weight;
        let cross_entropy = -row[target as usize].ln();
        let weighted = weight * cross_entropy;
        out.total += weighted;
        out.per_position.insert(
            i,
            PositionLoss {
                cross_entropy,
                weight,
                weighted,
            },
        );
    }
    Ok(out)
}

/// Unweighted masked cross-entropy.
pub fn base_loss(dists: &Distributions, targets: &[TokenId], corrupted: &CorruptedSequence) -> Result<f64> {
    let mut total = 0.0;
    for &i in &corrupted.masked {
        let row = checked_row(dists, i)?;
        let target = *targets
            .get(i)
            .ok_or_else(|| Error::Contract(format!("no target for position {i}")))?;
        total += -row[target as usize].ln();
    }
    Ok(total)
}
