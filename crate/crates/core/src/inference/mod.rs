//! Confidence-ordered unmasking from an all-`[MASK]` canvas, with a
//! periodic rewriting pass that re-masks the least decisive committed
//! tokens, rescores them and replaces at most a few.

mod decode;
mod rewrite;
mod trace;

use serde::{Deserialize, Serialize};

pub use decode::{confidence_decode, decode, DecodeOutput, DecodeState, PlainDecode};
pub use rewrite::{instability, instabilities, margin, margins, select_candidates, select_revisions, Revision, PROB_FLOOR};
pub use trace::{read_trace, write_trace, CommitRecord, ProposalRecord, TraceRecord};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Total denoising steps.
    pub steps: usize,
    /// Rewriting fires on steps that are multiples of this period...
    pub trigger_period: usize,
    /// ...and whose progress `s / steps` lies inside this window.
    pub window: [f64; 2],
    /// Low-margin committed positions re-masked per trigger.
    pub candidates: usize,
    /// Most unstable candidates considered for replacement per trigger.
    pub revisions: usize,
    /// Minimum probability of a replacement token.
    pub threshold: f64,
    /// Canvas length excluding the end marker; `None` uses the grammar's
    /// fixed report length.
    pub target_length: Option<usize>,
    /// Stop once nothing is masked and no trigger is pending.
    pub early_exit: bool,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            steps: 80,
            trigger_period: 8,
            window: [0.25, 0.75],
            candidates: 3,
            revisions: 1,
            threshold: 0.3,
            target_length: None,
            early_exit: false,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.trigger_period == 0 {
            return Err(Error::Config("steps and trigger_period must be positive".into()));
        }
        let [lo, hi] = self.window;
        // An upper bound above 1 is allowed so that a window past the end
        // expresses "never trigger".
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::Config(format!("window [{lo}, {hi}] must satisfy 0 <= lo < hi")));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.target_length == Some(0) {
            return Err(Error::Config("target_length must be positive".into()));
        }
        Ok(())
    }

    /// Same schedule with rewriting disabled.
    pub fn without_rewriting(self) -> Self {
        InferenceConfig { candidates: 0, ..self }
    }
}

/// Steps on which the rewriting pass runs, in increasing order.
pub fn trigger_steps(config: &InferenceConfig) -> Vec<usize> {
    let [lo, hi] = config.window;
    let total = config.steps as f64;
    (1..=config.steps)
        .filter(|s| s % config.trigger_period == 0)
        .filter(|&s| {
            let progress = s as f64 / total;
            progress >= lo && progress <= hi
        })
        .collect()
}

/// Tokens committed at each step: `ceil(remaining / steps_left)`.
pub fn commit_schedule(length: usize, steps: usize) -> Vec<usize> {
    let mut remaining = length;
    (1..=steps)
        .map(|s| {
            let n = remaining.div_ceil(steps - s + 1);
            remaining -= n;
            n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(steps: usize, period: usize) -> InferenceConfig {
        InferenceConfig { steps, trigger_period: period, ..InferenceConfig::default() }
    }

    #[test]
    fn default_triggers() {
        assert_eq!(trigger_steps(&InferenceConfig::default()), vec![24, 32, 40, 48, 56]);
        assert_eq!(trigger_steps(&cfg(40, 8)), vec![16, 24]);
        assert!(trigger_steps(&cfg(8, 8)).is_empty());
        let never = InferenceConfig { window: [2.0, 3.0], ..InferenceConfig::default() };
        assert!(never.validate().is_ok());
        assert!(trigger_steps(&never).is_empty());
    }

    #[test]
    fn schedules() {
        assert!(commit_schedule(160, 80).iter().all(|&n| n == 2));
        let s = commit_schedule(64, 80);
        assert!(s[..64].iter().all(|&n| n == 1) && s[64..].iter().all(|&n| n == 0));
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            InferenceConfig { steps: 0, ..InferenceConfig::default() },
            InferenceConfig { window: [0.5, 0.5], ..InferenceConfig::default() },
            InferenceConfig { window: [-0.1, 0.5], ..InferenceConfig::default() },
            InferenceConfig { threshold: 1.5, ..InferenceConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn schedule_commits_everything(t in 1usize..400, s in 1usize..200) {
            let sched = commit_schedule(t, s);
            prop_assert_eq!(sched.len(), s);
            prop_assert_eq!(sched.iter().sum::<usize>(), t);
        }

        #[test]
        fn triggers_match_definition(s in 1usize..200, e in 1usize..20, lo in 0.0f64..1.0, width in 0.01f64..1.0) {
            let c = InferenceConfig { steps: s, trigger_period: e, window: [lo, lo + width], ..InferenceConfig::default() };
            let got = trigger_steps(&c);
            for step in 1..=s {
                let p = step as f64 / s as f64;
                let expected = step % e == 0 && p >= lo && p <= lo + width;
                prop_assert_eq!(got.contains(&step), expected);
            }
        }
    }
}
