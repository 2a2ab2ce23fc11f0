//! SFT and DPO baselines built from the same reference samples.

use std::collections::HashMap;

use super::objective::{accumulate_dpo_gradient, DpoInput};
use super::{run_loop, start_checkpoint, BatchStats, Checkpoint, Method, TrainConfig};
use crate::corpus::{CandidateSolution, Problem, SampleSet};
use crate::error::{Error, Result};
use crate::policy::{accumulate_logprob_grad, seq_logprob, snapshot_reference, PolicyParameters, TokenId, Vocabulary};

const SHORTEST_KEPT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftPair {
    pub problem_id: String,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SftDataset {
    pub pairs: Vec<SftPair>,
    /// Problems without a single correct sample.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpoTriple {
    pub problem_id: String,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
}

fn shortest_correct(set: &SampleSet) -> Vec<&CandidateSolution> {
    let mut correct: Vec<_> = set.samples.iter().filter(|s| s.correct).collect();
    correct.sort_by_key(|s| (s.length, s.sample_index));
    correct.truncate(SHORTEST_KEPT);
    correct
}

/// Up to two shortest correct samples per problem.
pub fn build_sft_dataset(sets: &[SampleSet]) -> SftDataset {
    let mut out = SftDataset::default();
    for set in sets {
        let picked = shortest_correct(set);
        if picked.is_empty() {
            out.skipped += 1;
        }
        out.pairs.extend(picked.into_iter().map(|s| SftPair { problem_id: set.problem_id.clone(), tokens: s.tokens.clone() }));
    }
    out
}

/// Each of the (up to two) shortest correct samples against the longest
/// sample overall. Returns the triples and the number of problems that
/// produced none.
///
/// A triple is dropped when chosen and rejected are the same sample or have
/// identical tokens, since its gradient would vanish.
pub fn build_dpo_pairs(sets: &[SampleSet]) -> (Vec<DpoTriple>, usize) {
    let mut triples = Vec::new();
    let mut skipped = 0;
    for set in sets {
        let Some(rejected) = set
            .samples
            .iter()
            .min_by_key(|s| (std::cmp::Reverse(s.length), s.sample_index))
        else {
            skipped += 1;
            continue;
        };
        let before = triples.len();
        for chosen in shortest_correct(set) {
            if chosen.sample_index == rejected.sample_index || chosen.tokens == rejected.tokens {
                continue;
            }
            triples.push(DpoTriple {
                problem_id: set.problem_id.clone(),
                chosen: chosen.tokens.clone(),
                rejected: rejected.tokens.clone(),
            });
        }
        if triples.len() == before {
            skipped += 1;
        }
    }
    (triples, skipped)
}

fn check_method(cfg: &TrainConfig, want: Method) -> Result<()> {
    cfg.validate()?;
    if cfg.method != want {
        return Err(Error::Config(format!("{want} trainer called with method {}", cfg.method)));
    }
    Ok(())
}

fn context_lookup<'a>(
    vocab: &Vocabulary,
    problems: &[Problem],
    ids: impl Iterator<Item = &'a str>,
) -> Result<Vec<Vec<TokenId>>> {
    let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    ids.map(|id| {
        by_id
            .get(id)
            .map(|p| p.context(vocab))
            .ok_or_else(|| Error::Input(format!("no problem with id {id}")))
    })
    .collect()
}

/// Maximum-likelihood fine-tuning; the loss is `-mean log π(y|x)` per batch.
pub fn train_sft(
    vocab: &Vocabulary,
    policy: PolicyParameters,
    problems: &[Problem],
    pairs: &[SftPair],
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    check_method(cfg, Method::Sft)?;
    if pairs.is_empty() {
        return Err(Error::Input("SFT needs at least one pair".into()));
    }
    let contexts = context_lookup(vocab, problems, pairs.iter().map(|p| p.problem_id.as_str()))?;
    let mut ckpt = start_checkpoint(policy, pairs.len(), cfg);
    run_loop(&mut ckpt, pairs.len(), None, |params, batch, grad| {
        let scale = 1.0 / batch.len() as f64;
        let mut stats = BatchStats { mean_ratio: 1.0, ..BatchStats::default() };
        for &i in batch {
            let lp = accumulate_logprob_grad(params, &contexts[i], &pairs[i].tokens, -scale, grad)?;
            stats.loss -= scale * lp;
        }
        Ok(stats)
    })?;
    Ok(ckpt)
}

/// Direct preference optimization against a frozen copy of `policy`.
///
/// The metrics log's `mean_ratio` column holds the mean preference margin.
pub fn train_dpo(
    vocab: &Vocabulary,
    policy: PolicyParameters,
    problems: &[Problem],
    triples: &[DpoTriple],
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    check_method(cfg, Method::Dpo)?;
    if triples.is_empty() {
        return Err(Error::Input("DPO needs at least one preference triple".into()));
    }
    let contexts = context_lookup(vocab, problems, triples.iter().map(|t| t.problem_id.as_str()))?;
    let reference = snapshot_reference(&policy);
    let refs = triples
        .iter()
        .zip(&contexts)
        .map(|(t, c)| Ok((seq_logprob(&reference, c, &t.chosen)?, seq_logprob(&reference, c, &t.rejected)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut ckpt = start_checkpoint(policy, triples.len(), cfg);
    run_loop(&mut ckpt, triples.len(), None, |params, batch, grad| {
        let scale = 1.0 / batch.len() as f64;
        let mut stats = BatchStats::default();
        for &i in batch {
            let input = DpoInput {
                context: &contexts[i],
                chosen: &triples[i].chosen,
                rejected: &triples[i].rejected,
                ref_chosen: refs[i].0,
                ref_rejected: refs[i].1,
            };
            let term = accumulate_dpo_gradient(params, &input, cfg.dpo_beta, scale, grad)?;
            stats.loss += scale * term.loss;
            stats.mean_ratio += scale * term.margin;
        }
        Ok(stats)
    })?;
    Ok(ckpt)
}
