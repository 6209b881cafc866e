//! Text-overlap metrics, slot-level finding scores and ablation runs.

mod ablation;
mod metrics;

use serde::Serialize;

pub use ablation::{
    read_results_csv, run_ablation, sensitivity_hierarchy_variants, sensitivity_rewriting_variants, training_variants,
    write_results_csv, AblationRow, Variant,
};
pub use metrics::{bleu, clinical_f1, clinical_scores, lcs_len, rouge_l, ClinicalScores};

use crate::corpus::{FindingVector, Observation, ReportSample, Vocab};
use crate::denoiser::{Denoiser, Real};
use crate::inference::{decode, DecodeOutput, InferenceConfig};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Mean sentence BLEU-1..4.
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// F1 over the five-observation subset.
    pub f1_subset: f64,
    pub samples: usize,
}

/// Scores generated token sequences against their reference samples.
pub fn score<S: AsRef<str>>(generated: &[Vec<S>], references: &[ReportSample]) -> MetricsReport {
    let n = generated.len().min(references.len());
    let mut bleu_sum = [0.0; 4];
    let mut rouge_sum = 0.0;
    for (g, r) in generated.iter().zip(references) {
        let g: Vec<&str> = g.iter().map(AsRef::as_ref).collect();
        for (acc, b) in bleu_sum.iter_mut().zip(bleu(&g, &r.tokens.iter().map(String::as_str).collect::<Vec<_>>(), 4)) {
            *acc += b;
        }
        rouge_sum += rouge_l(&g, &r.tokens.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let conditions: Vec<FindingVector> = references.iter().map(|r| r.condition).collect();
    let all = clinical_f1(&generated[..n], &conditions[..n], None);
    let subset = clinical_f1(&generated[..n], &conditions[..n], Some(&Observation::SUBSET5));
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    MetricsReport {
        bleu: bleu_sum.map(mean),
        rouge_l: mean(rouge_sum),
        precision: all.precision,
        recall: all.recall,
        f1: all.f1,
        f1_subset: subset.f1,
        samples: n,
    }
}

/// Decodes one report per reference condition and scores the result.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub outputs: Vec<DecodeOutput>,
    pub forward_passes: usize,
    pub revisions: usize,
}

pub fn evaluate<S: Real>(
    model: &Denoiser<S>,
    vocab: &Vocab,
    references: &[ReportSample],
    config: &InferenceConfig,
) -> Result<Evaluation> {
    let outputs = references
        .iter()
        .map(|r| decode(model, vocab, &r.condition, config))
        .collect::<Result<Vec<_>>>()?;
    let generated: Vec<Vec<String>> = outputs.iter().map(|o| o.tokens.clone()).collect();
    Ok(Evaluation {
        metrics: score(&generated, references),
        forward_passes: outputs.iter().map(|o| o.state.forward_passes).sum(),
        revisions: outputs.iter().map(|o| o.state.revisions.len()).sum(),
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_dataset, CorpusConfig};
    use proptest::prelude::*;

    #[test]
    fn ground_truth_scores_perfectly() {
        let samples = generate_dataset(200, &CorpusConfig::default(), 8).unwrap();
        let texts: Vec<Vec<String>> = samples.iter().map(|s| s.tokens.clone()).collect();
        let m = score(&texts, &samples);
        assert_eq!(m.f1, 1.0);
        assert!(m.bleu.iter().all(|&b| (b - 1.0).abs() < 1e-12));
        assert!((m.rouge_l - 1.0).abs() < 1e-12);
        assert_eq!(m.samples, 200);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bleu_is_monotone_on_corpus_pairs(seed in any::<u64>()) {
            let s = generate_dataset(2, &CorpusConfig::default(), seed).unwrap();
            let b = bleu(&s[0].tokens, &s[1].tokens, 4);
            for w in b.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", b);
            }
            let m = score(&[s[0].tokens.clone()], &s[1..]);
            for x in m.bleu.iter().chain([m.rouge_l, m.precision, m.recall, m.f1, m.f1_subset].iter()) {
                prop_assert!((0.0..=1.0).contains(x));
            }
        }
    }
}
