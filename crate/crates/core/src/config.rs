//! Run configuration: one JSON document with a section per subsystem.
//! Unknown keys are rejected with their full path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchor::HierarchyConfig;
use crate::corpus::CorpusConfig;
use crate::denoiser::{DenoiserConfig, TrainConfig};
use crate::inference::InferenceConfig;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_reports: usize,
    pub eval_reports: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train_reports: 10_000, eval_reports: 100 }
    }
}

/// Output locations, relative to the `--out` directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub eval_dataset: PathBuf,
    pub checkpoints: PathBuf,
    pub results: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: "data/train.jsonl".into(),
            eval_dataset: "data/eval.jsonl".into(),
            checkpoints: "checkpoints".into(),
            results: "results".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationGrid {
    /// Four training modes with and without rewriting.
    Training,
    /// Decay and exponent sweep.
    Hierarchy,
    /// Candidate count, period and threshold sweep.
    Rewriting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub grid: AblationGrid,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { grid: AblationGrid::Training, seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub data: DataConfig,
    pub hierarchy: HierarchyConfig,
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub ablation: AblationConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(if path == "." { e.inner().to_string() } else { format!("{path}: {}", e.inner()) })
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Fills derived values (vocabulary size, report length, per-subsystem
    /// seeds, the shared hierarchy) and validates every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.corpus.validate()?;
        self.hierarchy.validate()?;
        let vocab = self.corpus.vocab()?;
        if self.denoiser.vocab_size == 0 {
            self.denoiser.vocab_size = vocab.len();
        } else if self.denoiser.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "denoiser.vocab_size {} does not match the {}-token vocabulary",
                self.denoiser.vocab_size,
                vocab.len()
            )));
        }
        self.denoiser.seed = seed::derive(self.seed, "init");
        self.denoiser.validate()?;
        self.train.hierarchy = self.hierarchy;
        self.train.validate()?;
        if self.inference.target_length.is_none() {
            self.inference.target_length = Some(self.corpus.report_length());
        }
        self.inference.seed = seed::derive(self.seed, "decode");
        self.inference.validate()?;
        if self.ablation.seeds.is_empty() {
            return Err(Error::Config("ablation.seeds must not be empty".into()));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the resolved configuration to `path`.
    pub fn write_echo(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve_path(&self, out: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { out.join(p) }
    }
}
