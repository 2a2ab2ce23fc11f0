use std::collections::HashMap;

use rand::seq::index;

use super::objective::accumulate_lh_gradient;
use super::{run_loop, start_checkpoint, BatchStats, Checkpoint, Method, TrainConfig};
use crate::corpus::{Problem, SampleSet};
use crate::error::{Error, Result};
use crate::policy::{snapshot_reference, PolicyParameters, TokenId, Vocabulary};
use crate::reward::{normalize_rewards, reward_table, RewardRecord};

/// Result of a length-harmonizing run.
#[derive(Debug, Clone)]
pub struct LhOutcome {
    pub checkpoint: Checkpoint,
    /// Frozen copy of the policy taken before the first update.
    pub reference: PolicyParameters,
    /// Rewards of every reference sample, in set/sample order.
    pub rewards: Vec<RewardRecord>,
}

struct Item {
    context: usize,
    tokens: Vec<TokenId>,
    ref_logprob: f64,
    reward: f64,
}

/// Prepared training data; batch gradients are computed from this.
pub(crate) struct LhData {
    contexts: Vec<Vec<TokenId>>,
    items: Vec<Item>,
    rewards: Vec<RewardRecord>,
    clip_eps: f64,
}

/// Positions (within each set's sample list) of the `m_select` samples used
/// for training, drawn uniformly without replacement per problem.
pub fn select_training_samples(sets: &[SampleSet], cfg: &TrainConfig) -> Vec<Vec<usize>> {
    sets.iter()
        .map(|set| {
            let mut rng = crate::seed::rng(cfg.seed, &["select", &set.problem_id]);
            let mut picked = index::sample(&mut rng, set.samples.len(), cfg.m_select.min(set.samples.len())).into_vec();
            picked.sort_unstable();
            picked
        })
        .collect()
}

impl LhData {
    pub(crate) fn new(vocab: &Vocabulary, problems: &[Problem], sets: &[SampleSet], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.method != Method::Lh {
            return Err(Error::Config(format!("train_lh called with method {}", cfg.method)));
        }
        if sets.is_empty() {
            return Err(Error::Input("no sample sets to train on".into()));
        }
        let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
        for set in sets {
            if set.k() != cfg.k_samples {
                return Err(Error::Input(format!(
                    "problem {} has {} samples, config expects k_samples = {}",
                    set.problem_id,
                    set.k(),
                    cfg.k_samples
                )));
            }
            if let Some(s) = set.samples.iter().find(|s| !(s.ref_logprob.is_finite() && s.ref_logprob <= 0.0)) {
                return Err(Error::Input(format!(
                    "problem {} sample {} lacks a valid ref_logprob ({})",
                    set.problem_id, s.sample_index, s.ref_logprob
                )));
            }
        }

        let mut rewards = reward_table(sets, cfg.lambda)?;
        normalize_rewards(&mut rewards);

        let mut contexts = Vec::with_capacity(sets.len());
        let mut items = Vec::new();
        let mut offset = 0;
        for (set, picked) in sets.iter().zip(select_training_samples(sets, cfg)) {
            let problem = by_id
                .get(set.problem_id.as_str())
                .ok_or_else(|| Error::Input(format!("no problem with id {}", set.problem_id)))?;
            contexts.push(problem.context(vocab));
            for pos in picked {
                let s = &set.samples[pos];
                let r = &rewards[offset + pos];
                items.push(Item {
                    context: contexts.len() - 1,
                    tokens: s.tokens.clone(),
                    ref_logprob: s.ref_logprob,
                    reward: if cfg.normalize_rewards { r.normalized } else { r.raw },
                });
            }
            offset += set.samples.len();
        }
        Ok(Self { contexts, items, rewards, clip_eps: cfg.clip_eps })
    }

    pub(crate) fn len(&self) -> usize {
        self.items.len()
    }

    pub(crate) fn batch_gradient(&self, params: &PolicyParameters, batch: &[usize], grad: &mut [f64]) -> Result<BatchStats> {
        let scale = 1.0 / batch.len() as f64;
        let mut stats = BatchStats::default();
        for &i in batch {
            let it = &self.items[i];
            let term = accumulate_lh_gradient(
                params,
                &self.contexts[it.context],
                &it.tokens,
                it.ref_logprob,
                it.reward,
                self.clip_eps,
                scale,
                grad,
            )?;
            stats.loss += scale * term.loss;
            stats.mean_ratio += scale * term.ratio;
            stats.clip_fraction += scale * f64::from(u8::from(term.clipped));
        }
        Ok(stats)
    }
}

/// Off-policy length-harmonizing fine-tuning.
///
/// Freezes `policy` as the reference, scores every reference sample,
/// z-scores the rewards over the whole set, keeps `m_select` samples per
/// problem, and descends the clipped loss for `epochs` passes.
pub fn train_lh(
    vocab: &Vocabulary,
    policy: PolicyParameters,
    problems: &[Problem],
    sets: &[SampleSet],
    cfg: &TrainConfig,
) -> Result<LhOutcome> {
    let data = LhData::new(vocab, problems, sets, cfg)?;
    let reference = snapshot_reference(&policy);
    let mut checkpoint = start_checkpoint(policy, data.len(), cfg);
    run_loop(&mut checkpoint, data.len(), None, |p, b, g| data.batch_gradient(p, b, g))?;
    Ok(LhOutcome { checkpoint, reference, rewards: data.rewards })
}

/// Continues (or starts) a run from `checkpoint`, stopping after `stop_at`
/// total steps when given.
pub fn resume_lh(
    vocab: &Vocabulary,
    checkpoint: &mut Checkpoint,
    problems: &[Problem],
    sets: &[SampleSet],
    stop_at: Option<usize>,
) -> Result<()> {
    let data = LhData::new(vocab, problems, sets, &checkpoint.config)?;
    run_loop(checkpoint, data.len(), stop_at, |p, b, g| data.batch_gradient(p, b, g))
}

/// Fresh checkpoint for an LH run, before any step.
pub fn begin_lh(
    vocab: &Vocabulary,
    policy: PolicyParameters,
    problems: &[Problem],
    sets: &[SampleSet],
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let data = LhData::new(vocab, problems, sets, cfg)?;
    Ok(start_checkpoint(policy, data.len(), cfg))
}
