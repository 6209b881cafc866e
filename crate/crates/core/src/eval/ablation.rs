use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::anchor::HierarchyConfig;
use crate::corpus::{ReportSample, Vocab};
use crate::denoiser::{init_params, save_checkpoint, train, DenoiserCheckpoint, DenoiserConfig, TrainConfig, TrainingExample};
use crate::diffusion::AblationMode;
use crate::inference::{write_trace, InferenceConfig};
use crate::seed;
use crate::{Error, Result};

/// One row of an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
}

/// Four training modes, each decoded with and without rewriting.
pub fn training_variants(train: &TrainConfig, inference: &InferenceConfig) -> Vec<Variant> {
    let mut out = Vec::with_capacity(8);
    for mode in AblationMode::ALL {
        let t = TrainConfig { mode, ..*train };
        out.push(Variant { name: mode.name().to_string(), train: t, inference: inference.without_rewriting() });
        out.push(Variant { name: format!("{}+rewrite", mode.name()), train: t, inference: *inference });
    }
    out
}

/// Decay and exponent settings for the full hierarchy, with rewriting.
pub fn sensitivity_hierarchy_variants(train: &TrainConfig, inference: &InferenceConfig) -> Vec<Variant> {
    [(0.5, 0.5), (1.0, 1.5), (1.5, 1.5), (1.0, 1.0), (1.0, 2.0)]
        .into_iter()
        .map(|(beta, gamma)| Variant {
            name: format!("beta{beta}-gamma{gamma}"),
            train: TrainConfig {
                mode: AblationMode::Full,
                hierarchy: HierarchyConfig { beta, gamma, ..train.hierarchy },
                ..*train
            },
            inference: *inference,
        })
        .collect()
}

/// Candidate count, trigger period and threshold settings on one model.
pub fn sensitivity_rewriting_variants(train: &TrainConfig, inference: &InferenceConfig) -> Vec<Variant> {
    [(1, 8, 0.3), (3, 8, 0.3), (5, 8, 0.3), (3, 16, 0.3), (3, 8, 0.5)]
        .into_iter()
        .map(|(m, e, tau)| Variant {
            name: format!("m{m}-e{e}-tau{tau}"),
            train: TrainConfig { mode: AblationMode::Full, ..*train },
            inference: InferenceConfig { candidates: m, trigger_period: e, threshold: tau, ..*inference },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    /// Mean forward passes per decoded report.
    pub forward_passes: f64,
    /// Revisions summed over all decoded reports.
    pub revisions: usize,
}

/// Trains and evaluates every (variant, seed) cell. Variants that share a
/// training configuration reuse one trained model per seed. With `out_dir`,
/// per-cell checkpoints and traces are written there.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    train_set: &[TrainingExample],
    eval_set: &[ReportSample],
    vocab: &Vocab,
    denoiser: &DenoiserConfig,
    variants: &[Variant],
    seeds: &[u64],
    out_dir: Option<&Path>,
    mut log: impl FnMut(&str),
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::Contract("ablation needs at least one variant and one seed".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut trained: Vec<(TrainConfig, u64, DenoiserCheckpoint)> = Vec::new();
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    for &s in seeds {
        for v in variants {
            let idx = match trained.iter().position(|(t, ts, _)| *t == v.train && *ts == s) {
                Some(i) => i,
                None => {
                    log(&format!("training {} seed {s}", v.train.mode.name()));
                    let cfg = DenoiserConfig { seed: seed::derive(s, "init"), ..*denoiser };
                    let mut ck = init_params(&cfg, cfg.seed)?;
                    train(&mut ck, train_set, v.train, vocab.clone(), seed::derive(s, "train"), |_| {})?;
                    trained.push((v.train, s, ck));
                    trained.len() - 1
                }
            };
            let ck = &trained[idx].2;
            let eval = evaluate(&ck.model, vocab, eval_set, &v.inference)?;
            if let Some(dir) = out_dir {
                save_checkpoint(ck, &dir.join(format!("{}-seed{s}.ckpt", v.name)))?;
                let trace: Vec<_> = eval.outputs.iter().flat_map(|o| o.trace.iter().cloned()).collect();
                write_trace(&trace, &dir.join(format!("{}-seed{s}.trace.jsonl", v.name)))?;
            }
            let m = eval.metrics;
            log(&format!("{} seed {s}: F1 {:.4} BLEU-4 {:.4}", v.name, m.f1, m.bleu[3]));
            rows.push(AblationRow {
                variant: v.name.clone(),
                seed: s,
                bleu1: m.bleu[0],
                bleu2: m.bleu[1],
                bleu3: m.bleu[2],
                bleu4: m.bleu[3],
                rouge_l: m.rouge_l,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                forward_passes: eval.forward_passes as f64 / eval_set.len().max(1) as f64,
                revisions: eval.revisions,
            });
        }
    }
    Ok(rows)
}

pub fn write_results_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<AblationRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}
