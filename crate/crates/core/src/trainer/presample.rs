use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSolution, Problem, SampleSet};
use crate::error::{Error, Result};
use crate::policy::{sample_topp, seq_logprob, PolicyParameters, SamplingConfig, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresampleConfig {
    /// Samples per problem.
    pub k: usize,
    /// `sampling.seed` is the run seed; per-sample seeds derive from it.
    pub sampling: SamplingConfig,
}

impl Default for PresampleConfig {
    fn default() -> Self {
        Self { k: 16, sampling: SamplingConfig::default() }
    }
}

/// Seed of sample `index` of `problem_id`; independent of every other sample.
pub fn sample_seed(run_seed: u64, problem_id: &str, index: usize) -> u64 {
    crate::seed::derive(run_seed, &[problem_id, &index.to_string()])
}

/// Draws K reference solutions per problem and caches their log-probabilities.
pub fn presample(
    reference: &PolicyParameters,
    vocab: &Vocabulary,
    problems: &[Problem],
    cfg: &PresampleConfig,
) -> Result<Vec<SampleSet>> {
    if cfg.k == 0 {
        return Err(Error::Config("presample k must be >= 1".into()));
    }
    cfg.sampling.validate()?;
    problems
        .iter()
        .map(|problem| {
            let context = problem.context(vocab);
            let samples = (0..cfg.k)
                .map(|i| {
                    let sc = SamplingConfig { seed: sample_seed(cfg.sampling.seed, &problem.id, i), ..cfg.sampling };
                    let s = sample_topp(reference, &context, vocab.eos(), &sc)?;
                    let lp = seq_logprob(reference, &context, &s.tokens)?;
                    Ok(CandidateSolution::new(vocab, problem, s.tokens, lp, i, s.truncated))
                })
                .collect::<Result<Vec<_>>>()?;
            SampleSet::from_samples(problem.id.clone(), samples)
        })
        .collect()
}
