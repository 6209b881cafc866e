use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::model::Denoiser;
use super::train::{loss_and_grad, LossItem, TrainingExample};
use crate::anchor::HierarchyConfig;
use crate::corpus::Vocab;
use crate::diffusion::{corrupt, sample_noise_level, weighted_loss, AblationMode};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Random directions confined to each named tensor.
    pub directions_per_tensor: usize,
    /// Random directions over the whole parameter vector.
    pub global_directions: usize,
    pub tolerance: f64,
    /// Fixed noise level; `None` draws one per example.
    pub noise_level: Option<f64>,
    pub seed: u64,
    /// Deliberately break the backward pass by ignoring token weights.
    pub drop_weights: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            directions_per_tensor: 1,
            global_directions: 4,
            tolerance: 1e-3,
            noise_level: None,
            seed: 0,
            drop_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checks: Vec<DirectionCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic directional derivatives of the summed weighted loss
/// against central differences, in double precision, with the corruption
/// held fixed.
pub fn grad_check(
    model: &Denoiser<f32>,
    examples: &[TrainingExample],
    vocab: &Vocab,
    hierarchy: &HierarchyConfig,
    mode: AblationMode,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if examples.is_empty() {
        return Err(Error::Contract("gradient check needs at least one example".into()));
    }
    let mut rng = seed::rng_for(options.seed, "grad-check");
    let mut model = model.cast::<f64>();
    let mut items = Vec::with_capacity(examples.len());
    for ex in examples {
        let annotations = mode.annotate(&ex.annotations, hierarchy);
        let t = options.noise_level.unwrap_or_else(|| sample_noise_level(&mut rng));
        let corrupted = corrupt(&ex.tokens, &annotations, vocab, t, &mut rng)?;
        items.push(LossItem {
            corrupted,
            targets: &ex.tokens,
            annotations,
            condition: &ex.condition,
        });
    }

    let mut grads = vec![0.0f64; model.param_count()];
    loss_and_grad(&model, &items, 1.0, options.drop_weights, &mut grads)?;

    let mut directions: Vec<(String, std::ops::Range<usize>)> = Vec::new();
    for spec in model.layout().tensors() {
        for k in 0..options.directions_per_tensor {
            directions.push((format!("{}#{k}", spec.name), spec.range.clone()));
        }
    }
    for k in 0..options.global_directions {
        directions.push((format!("global#{k}"), 0..model.param_count()));
    }

    let mut checks = Vec::with_capacity(directions.len());
    for (label, range) in directions {
        let dir: Vec<f64> = (0..range.len()).map(|_| rng.sample(StandardNormal)).collect();
        let dir_rms = rms(&dir);
        let theta_rms = rms(&model.params()[range.clone()]).max(1e-2);
        let h = 1e-3 * theta_rms / dir_rms;
        let analytic: f64 = grads[range.clone()].iter().zip(&dir).map(|(g, v)| g * v).sum();

        let base: Vec<f64> = model.params()[range.clone()].to_vec();
        shift(&mut model, &range, &base, &dir, h);
        let plus = total_loss(&model, &items)?;
        shift(&mut model, &range, &base, &dir, -h);
        let minus = total_loss(&model, &items)?;
        model.params_mut()[range.clone()].copy_from_slice(&base);

        let numeric = (plus - minus) / (2.0 * h);
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        checks.push(DirectionCheck { label, analytic, numeric, rel_err });
    }
    let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_err <= options.tolerance,
        checks,
        max_rel_err,
        tolerance: options.tolerance,
    })
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn shift(model: &mut Denoiser<f64>, range: &std::ops::Range<usize>, base: &[f64], dir: &[f64], h: f64) {
    for ((p, b), v) in model.params_mut()[range.clone()].iter_mut().zip(base).zip(dir) {
        *p = b + h * v;
    }
}

fn total_loss(model: &Denoiser<f64>, items: &[LossItem<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for item in items {
        let dists = model.forward(&item.corrupted.tokens, item.condition)?;
        total += weighted_loss(&dists, item.targets, &item.corrupted, &item.annotations)?.total;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_dataset, CorpusConfig};
    use crate::denoiser::{init_params, prepare_examples, DenoiserConfig};

    fn fixture() -> (Denoiser<f32>, Vec<TrainingExample>, Vocab) {
        let corpus = CorpusConfig { abnormal_prior: [0.7; 6], ..CorpusConfig::default() };
        let vocab = corpus.vocab().unwrap();
        let samples = generate_dataset(2, &corpus, 5).unwrap();
        let ex = prepare_examples(&samples, &vocab, &HierarchyConfig::default()).unwrap();
        let cfg = DenoiserConfig {
            vocab_size: vocab.len(),
            d_model: 16,
            layers: 2,
            heads: 2,
            max_len: 60,
            ..DenoiserConfig::default()
        };
        (init_params(&cfg, 1).unwrap().model, ex, vocab)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (model, ex, vocab) = fixture();
        let opts = GradCheckOptions { noise_level: Some(0.7), ..GradCheckOptions::default() };
        let r = grad_check(&model, &ex, &vocab, &HierarchyConfig::default(), AblationMode::Full, &opts).unwrap();
        assert!(r.passed, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn dropping_weights_is_detected() {
        let (model, ex, vocab) = fixture();
        let opts = GradCheckOptions { noise_level: Some(0.7), drop_weights: true, ..GradCheckOptions::default() };
        let r = grad_check(&model, &ex, &vocab, &HierarchyConfig::default(), AblationMode::Full, &opts).unwrap();
        assert!(!r.passed);
    }
}
