//! Synthetic structured reports with exact entity graphs and finding labels.

mod dataset;
mod extract;
mod finding;
mod grammar;
mod histogram;
mod vocab;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_dataset, generate_dataset, parse_record, read_dataset, record_line, write_dataset,
};
pub use extract::extract_findings;
pub use finding::{
    sample_condition, Finding, FindingVector, Laterality, Observation, Severity, Slot,
};
pub use grammar::{clause_width, generate_report, report_length, surface_tokens, ReportSample};
pub use histogram::position_histogram;
pub use vocab::{default_vocabulary, prefix_placeholder, TokenId, Vocab, EOS, MASK, PAD};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseOrder {
    Canonical,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Per-slot probability of an abnormal finding, in slot order.
    pub abnormal_prior: [f64; 6],
    /// Probability that an abnormal finding carries a severity.
    pub severity_prior: f64,
    /// Probability that an abnormal finding in a lateral slot carries a side.
    pub laterality_prior: f64,
    pub template_set: u32,
    pub clause_order: ClauseOrder,
    pub vocabulary: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            abnormal_prior: [0.3; 6],
            severity_prior: 0.5,
            laterality_prior: 0.5,
            template_set: 0,
            clause_order: ClauseOrder::Canonical,
            vocabulary: default_vocabulary(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let priors = self
            .abnormal_prior
            .iter()
            .chain([&self.severity_prior, &self.laterality_prior]);
        if priors.into_iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("corpus priors must lie in [0, 1]".into()));
        }
        if self.template_set > 1 {
            return Err(Error::Config(format!(
                "unknown template set {}",
                self.template_set
            )));
        }
        self.vocab().map(|_| ())
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.vocabulary.clone())
    }

    pub fn report_length(&self) -> usize {
        report_length(self.template_set)
    }
}
