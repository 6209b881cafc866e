//! Small bidirectional transformer denoiser with hand-written
//! backpropagation, its training loop, checkpointing and gradient checking.

mod checkpoint;
mod gradcheck;
mod layout;
mod model;
mod optim;
mod real;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{init_params, load_checkpoint, save_checkpoint, DenoiserCheckpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layout::{Layout, TensorSpec};
pub use model::{condition_codes, Denoiser};
pub use optim::AdamW;
pub use real::Real;
pub use train::{prepare_examples, train, StepReport, TrainConfig, Trainer, TrainingExample};

use crate::corpus::Slot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Vocabulary size; 0 means "take it from the corpus vocabulary".
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    /// Maximum total sequence length including the condition prefix.
    pub max_len: usize,
    /// Number of condition-prefix positions.
    pub prefix_len: usize,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            vocab_size: 0,
            d_model: 128,
            layers: 4,
            heads: 4,
            max_len: 128,
            prefix_len: 8,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Config("denoiser vocab_size is unresolved".into()));
        }
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.prefix_len < Slot::COUNT {
            return Err(Error::Config(format!(
                "prefix_len {} cannot hold {} condition slots",
                self.prefix_len,
                Slot::COUNT
            )));
        }
        if self.max_len <= self.prefix_len {
            return Err(Error::Config("max_len must exceed prefix_len".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn hidden(&self) -> usize {
        4 * self.d_model
    }

    /// Longest report canvas the model accepts.
    pub fn max_canvas(&self) -> usize {
        self.max_len - self.prefix_len
    }
}
