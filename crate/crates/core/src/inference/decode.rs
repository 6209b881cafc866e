use super::rewrite::{best_allowed, instabilities, margins, proposals, select_candidates, Revision};
use super::trace::{CommitRecord, ProposalRecord, TraceRecord};
use super::{commit_schedule, trigger_steps, InferenceConfig};
use crate::corpus::{report_length, FindingVector, TokenId, Vocab};
use crate::denoiser::{Denoiser, Real};
use crate::diffusion::Distributions;
use crate::{Error, Result};

/// Decoder state after the most recent step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub step: usize,
    /// Canvas without the trailing end marker.
    pub tokens: Vec<TokenId>,
    pub committed: Vec<bool>,
    /// Distributions from the latest regular (unperturbed) pass.
    pub last: Option<Distributions>,
    pub forward_passes: usize,
    pub revisions: Vec<Revision>,
}

impl DecodeState {
    fn new(length: usize, mask: TokenId) -> Self {
        DecodeState {
            step: 0,
            tokens: vec![mask; length],
            committed: vec![false; length],
            last: None,
            forward_passes: 0,
            revisions: Vec::new(),
        }
    }

    pub fn committed_positions(&self) -> Vec<usize> {
        (0..self.tokens.len()).filter(|&i| self.committed[i]).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.committed.iter().filter(|c| !**c).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<String>,
    pub state: DecodeState,
    pub steps_run: usize,
    pub trace: Vec<TraceRecord>,
}

/// Output of decoding without rewriting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainDecode {
    pub ids: Vec<TokenId>,
    pub tokens: Vec<String>,
    pub forward_passes: usize,
    pub steps_run: usize,
}

struct Setup {
    length: usize,
    allowed: Vec<bool>,
}

fn setup<S: Real>(model: &Denoiser<S>, vocab: &Vocab, config: &InferenceConfig) -> Result<Setup> {
    config.validate()?;
    if model.config().vocab_size != vocab.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint vocabulary has {} tokens, corpus vocabulary has {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    let length = config.target_length.unwrap_or_else(|| report_length(0));
    if length + 1 > model.config().max_canvas() {
        return Err(Error::Contract(format!(
            "target length {length} plus end marker exceeds the model limit {}",
            model.config().max_canvas()
        )));
    }
    let allowed = (0..vocab.len()).map(|j| !vocab.is_reserved(j as TokenId)).collect();
    Ok(Setup { length, allowed })
}

fn canvas(tokens: &[TokenId], vocab: &Vocab) -> Vec<TokenId> {
    let mut c = Vec::with_capacity(tokens.len() + 1);
    c.extend_from_slice(tokens);
    c.push(vocab.eos());
    c
}

/// Masked positions ranked by top-1 allowed probability, lower position
/// first on ties; the first `n` are returned with their tokens.
fn most_confident(dists: &Distributions, committed: &[bool], allowed: &[bool], n: usize) -> Vec<(usize, TokenId, f64)> {
    let mut ranked: Vec<(usize, TokenId, f64)> = (0..committed.len())
        .filter(|&i| !committed[i])
        .map(|i| {
            let (tok, p) = best_allowed(dists.row(i), allowed);
            (i, tok, p)
        })
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

/// Confidence decoding with rewriting at the trigger steps.
pub fn decode<S: Real>(
    model: &Denoiser<S>,
    vocab: &Vocab,
    condition: &FindingVector,
    config: &InferenceConfig,
) -> Result<DecodeOutput> {
    let Setup { length, allowed } = setup(model, vocab, config)?;
    let schedule = commit_schedule(length, config.steps);
    let triggers = trigger_steps(config);
    let mut state = DecodeState::new(length, vocab.mask());
    let mut trace = vec![TraceRecord::Start { config: *config, length, triggers: triggers.clone() }];
    let mut steps_run = 0;

    for s in 1..=config.steps {
        state.step = s;
        steps_run = s;
        let dists = model.forward(&canvas(&state.tokens, vocab), condition)?;
        state.forward_passes += 1;

        let picked = most_confident(&dists, &state.committed, &allowed, schedule[s - 1]);
        let mut commits = Vec::with_capacity(picked.len());
        for &(i, tok, p) in &picked {
            state.tokens[i] = tok;
            state.committed[i] = true;
            commits.push(CommitRecord { position: i, token: vocab.token(tok).to_string(), confidence: p });
        }
        trace.push(TraceRecord::Step { step: s, forward_passes: state.forward_passes, commits });

        if triggers.contains(&s) {
            let scored = margins(&dists, &state.committed_positions());
            let candidates = select_candidates(&scored, config.candidates);
            if !candidates.is_empty() {
                let mut perturbed = state.tokens.clone();
                for &i in &candidates {
                    perturbed[i] = vocab.mask();
                }
                let pert = model.forward(&canvas(&perturbed, vocab), condition)?;
                state.forward_passes += 1;
                let unstable = instabilities(&pert, &state.tokens, &candidates);
                let considered = proposals(&unstable, &pert, &state.tokens, &allowed, config.revisions, config.threshold);
                let margin_of = |i: usize| scored.iter().find(|(p, _)| *p == i).map_or(0.0, |m| m.1);
                let mut records = Vec::with_capacity(considered.len());
                for p in &considered {
                    records.push(ProposalRecord {
                        position: p.position,
                        old: vocab.token(p.old).to_string(),
                        proposed: vocab.token(p.proposed).to_string(),
                        probability: p.probability,
                        margin: margin_of(p.position),
                        instability: p.instability,
                        accepted: p.accepted,
                    });
                    if p.accepted {
                        state.tokens[p.position] = p.proposed;
                        state.revisions.push(Revision {
                            step: s,
                            position: p.position,
                            old: p.old,
                            new: p.proposed,
                            margin: margin_of(p.position),
                            instability: p.instability,
                            probability: p.probability,
                        });
                    }
                }
                trace.push(TraceRecord::Trigger {
                    step: s,
                    margins: scored.iter().filter(|(i, _)| candidates.contains(i)).copied().collect(),
                    candidates,
                    instabilities: unstable,
                    proposals: records,
                });
            }
        }
        state.last = Some(dists);

        let pending = config.candidates > 0 && triggers.iter().any(|&t| t > s);
        if config.early_exit && state.masked_count() == 0 && !pending {
            break;
        }
    }

    let tokens = vocab.decode(&state.tokens);
    trace.push(TraceRecord::Summary {
        steps_run,
        forward_passes: state.forward_passes,
        revisions: state.revisions.len(),
        tokens: tokens.clone(),
    });
    Ok(DecodeOutput { tokens, state, steps_run, trace })
}

/// Confidence decoding with no rewriting at all.
pub fn confidence_decode<S: Real>(
    model: &Denoiser<S>,
    vocab: &Vocab,
    condition: &FindingVector,
    config: &InferenceConfig,
) -> Result<PlainDecode> {
    let Setup { length, allowed } = setup(model, vocab, config)?;
    let schedule = commit_schedule(length, config.steps);
    let mut ids = vec![vocab.mask(); length];
    let mut committed = vec![false; length];
    let mut forward_passes = 0;
    let mut steps_run = 0;
    for (s, &count) in schedule.iter().enumerate() {
        steps_run = s + 1;
        let dists = model.forward(&canvas(&ids, vocab), condition)?;
        forward_passes += 1;
        for (i, tok, _) in most_confident(&dists, &committed, &allowed, count) {
            ids[i] = tok;
            committed[i] = true;
        }
        if config.early_exit && committed.iter().all(|c| *c) {
            break;
        }
    }
    Ok(PlainDecode { tokens: vocab.decode(&ids), ids, forward_passes, steps_run })
}
