use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::Denoiser;
use super::optim::AdamW;
use super::real::Real;
use super::DenoiserCheckpoint;
use crate::anchor::{annotate_sample, HierarchyConfig, TokenAnnotation};
use crate::corpus::{FindingVector, ReportSample, TokenId, Vocab};
use crate::diffusion::{
    corrupt, sample_noise_level, weighted_loss, AblationMode, CorruptedSequence, Distributions,
    LossBreakdown,
};
use crate::seed::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    /// Filled in from the run configuration's hierarchy section.
    #[serde(skip)]
    pub hierarchy: HierarchyConfig,
    pub mode: AblationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            total_steps: 600,
            warmup_steps: 100,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip: 1.0,
            hierarchy: HierarchyConfig::default(),
            mode: AblationMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::Config("learning_rate must be >= 0 and grad_clip > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment coefficients must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Linear warmup, then cosine decay to a tenth of the peak rate.
    pub fn lr_at(&self, step: u64) -> f64 {
        let peak = self.learning_rate;
        if step < self.warmup_steps {
            return peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let floor = 0.1 * peak;
        floor + 0.5 * (peak - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// A report ready for training: content tokens followed by `[EOS]`, with
/// full-hierarchy annotations (the end marker is neutral).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub tokens: Vec<TokenId>,
    pub annotations: Vec<TokenAnnotation>,
    pub condition: FindingVector,
}

pub fn prepare_examples(
    samples: &[ReportSample],
    vocab: &Vocab,
    hierarchy: &HierarchyConfig,
) -> Result<Vec<TrainingExample>> {
    samples
        .iter()
        .map(|s| {
            let mut tokens = vocab.encode(&s.tokens)?;
            tokens.push(vocab.eos());
            let mut annotations = annotate_sample(s, hierarchy)?;
            annotations.push(TokenAnnotation::NEUTRAL);
            Ok(TrainingExample {
                tokens,
                annotations,
                condition: s.condition,
            })
        })
        .collect()
}

/// One corrupted example with the annotations its loss uses.
pub(crate) struct LossItem<'a> {
    pub corrupted: CorruptedSequence,
    pub targets: &'a [TokenId],
    pub annotations: Vec<TokenAnnotation>,
    pub condition: &'a FindingVector,
}

/// Loss of every item, and `scale * d(sum of losses)` accumulated into
/// `grads`. With `drop_weights` the backward pass ignores the per-token
/// weights while the reported loss keeps them (used to mutation-test the
/// gradient checker).
pub(crate) fn loss_and_grad<S: Real>(
    model: &Denoiser<S>,
    items: &[LossItem<'_>],
    scale: f64,
    drop_weights: bool,
    grads: &mut [S],
) -> Result<Vec<LossBreakdown>> {
    let v = model.config().vocab_size;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let cache = model.forward_cached(&item.corrupted.tokens, item.condition)?;
        let dists = Distributions::softmax(v, &cache.logits);
        let loss = weighted_loss(&dists, item.targets, &item.corrupted, &item.annotations)?;
        if !loss.total.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {}", loss.total)));
        }
        let mut dlogits = vec![S::ZERO; cache.logits.len()];
        for &i in &item.corrupted.masked {
            let w = if drop_weights { 1.0 } else { item.annotations[i].weight };
            let row = dists.row(i);
            let target = item.targets[i] as usize;
            for (j, g) in dlogits[i * v..(i + 1) * v].iter_mut().enumerate() {
                let onehot = if j == target { 1.0 } else { 0.0 };
                *g = S::from_f64(scale * w * (row[j] - onehot));
            }
        }
        model.backward(&cache, &dlogits, grads);
        out.push(loss);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub learning_rate: f64,
    /// Mean of the per-example weighted losses.
    pub mean_loss: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub per_example: Vec<LossBreakdown>,
}

/// Optimizer, training stream and scratch gradient buffer for one run.
pub struct Trainer {
    pub config: TrainConfig,
    vocab: Vocab,
    optimizer: AdamW,
    rng: Rng,
    grads: Vec<f32>,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, vocab: Vocab, model: &Denoiser<f32>, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != model.config().vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Trainer {
            optimizer: AdamW::new(model.layout(), config.beta1, config.beta2, config.eps, config.weight_decay),
            grads: vec![0.0; model.param_count()],
            rng: seed::rng(seed),
            config,
            vocab,
            step: 0,
        })
    }

    pub fn rng(&self) -> &Rng {
        &self.rng
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One optimizer step on the mode-appropriate weighted objective,
    /// averaged over the batch, with global-norm clipping.
    pub fn step(&mut self, model: &mut Denoiser<f32>, batch: &[TrainingExample]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Contract("empty training batch".into()));
        }
        let cfg = self.config;
        let mut items = Vec::with_capacity(batch.len());
        for ex in batch {
            let annotations = cfg.mode.annotate(&ex.annotations, &cfg.hierarchy);
            let t = sample_noise_level(&mut self.rng);
            let corrupted = corrupt(&ex.tokens, &annotations, &self.vocab, t, &mut self.rng)?;
            items.push(LossItem {
                corrupted,
                targets: &ex.tokens,
                annotations,
                condition: &ex.condition,
            });
        }
        self.grads.fill(0.0);
        let per_example = loss_and_grad(model, &items, 1.0 / batch.len() as f64, false, &mut self.grads)
            .map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("step {}: {m}", self.step)),
                other => other,
            })?;
        let grad_norm = self.grads.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Numerical(format!("step {}: non-finite gradient norm", self.step)));
        }
        if grad_norm > cfg.grad_clip {
            let s = (cfg.grad_clip / grad_norm) as f32;
            self.grads.iter_mut().for_each(|g| *g *= s);
        }
        let lr = cfg.lr_at(self.step);
        self.optimizer.update(model.params_mut(), &self.grads, lr);
        self.step += 1;
        let mean_loss = per_example.iter().map(|l| l.total).sum::<f64>() / batch.len() as f64;
        Ok(StepReport {
            step: self.step,
            learning_rate: lr,
            mean_loss,
            grad_norm,
            per_example,
        })
    }
}

/// Runs `config.total_steps` steps over shuffled epochs of `examples`.
pub fn train(
    checkpoint: &mut DenoiserCheckpoint,
    examples: &[TrainingExample],
    config: TrainConfig,
    vocab: Vocab,
    seed: u64,
    mut on_step: impl FnMut(&StepReport),
) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Contract("no training examples".into()));
    }
    let mut trainer = Trainer::new(config, vocab, &checkpoint.model, seed)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.total_steps {
        batch.clear();
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut trainer.rng);
                cursor = 0;
            }
            batch.push(examples[order[cursor]].clone());
            cursor += 1;
        }
        let report = trainer.step(&mut checkpoint.model, &batch)?;
        on_step(&report);
    }
    checkpoint.step += trainer.steps_taken();
    checkpoint.rng = Some(trainer.rng.clone());
    Ok(())
}
