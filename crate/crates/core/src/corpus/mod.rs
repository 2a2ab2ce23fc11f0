//! Problems, sampled solutions, and the answer checker.

mod difficulty;
mod store;
mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{TokenId, Vocabulary};

pub(crate) use difficulty::balanced_sizes;
pub use difficulty::{filter_by_min_acc, partition_by_difficulty, DifficultyTier};
pub use store::{load_problems, load_samples, save_problems, save_samples};
pub use task::{gen_problems, operands, render_solution, SolutionStyle, TaskConfig};

/// A prompt plus its canonical answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub prompt_tokens: Vec<TokenId>,
    /// Canonical answer as a token sequence (no delimiter, no end-of-sequence).
    pub answer: Vec<TokenId>,
    pub meta: BTreeMap<String, String>,
}

impl Problem {
    pub fn new(
        vocab: &Vocabulary,
        id: impl Into<String>,
        prompt_tokens: Vec<TokenId>,
        answer: Vec<TokenId>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let id = id.into();
        if prompt_tokens.is_empty() {
            return Err(Error::Input(format!("problem {id}: empty prompt")));
        }
        if answer.is_empty() {
            return Err(Error::Input(format!("problem {id}: empty answer")));
        }
        if prompt_tokens.contains(&vocab.eos()) {
            return Err(Error::Input(format!("problem {id}: prompt contains end-of-sequence")));
        }
        if let Some(t) = prompt_tokens.iter().chain(&answer).find(|&&t| !vocab.contains(t)) {
            return Err(Error::Input(format!("problem {id}: token {t} outside vocabulary")));
        }
        Ok(Self { id, prompt_tokens, answer, meta })
    }

    /// Tokens the policy conditions on: begin-of-sequence (when the
    /// vocabulary has one) followed by the prompt.
    pub fn context(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        vocab.bos().into_iter().chain(self.prompt_tokens.iter().copied()).collect()
    }
}

/// One sampled solution with its cached reference log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub problem_id: String,
    pub tokens: Vec<TokenId>,
    /// Solution token count, end-of-sequence included.
    pub length: usize,
    pub correct: bool,
    pub ref_logprob: f64,
    pub sample_index: usize,
    /// Hit the sampling cutoff; end-of-sequence was appended.
    #[serde(default)]
    pub truncated: bool,
}

impl CandidateSolution {
    pub fn new(
        vocab: &Vocabulary,
        problem: &Problem,
        tokens: Vec<TokenId>,
        ref_logprob: f64,
        sample_index: usize,
        truncated: bool,
    ) -> Self {
        let correct = check_answer(vocab, problem, &tokens);
        Self {
            problem_id: problem.id.clone(),
            length: tokens.len(),
            tokens,
            correct,
            ref_logprob,
            sample_index,
            truncated,
        }
    }
}

/// The K reference samples of one problem with their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub problem_id: String,
    pub samples: Vec<CandidateSolution>,
    pub mean_length: f64,
    pub mean_acc: f64,
}

impl SampleSet {
    pub fn from_samples(problem_id: impl Into<String>, samples: Vec<CandidateSolution>) -> Result<Self> {
        let problem_id = problem_id.into();
        if samples.is_empty() {
            return Err(Error::Input(format!("sample set {problem_id} is empty")));
        }
        let (mean_length, mean_acc) = means(&samples);
        Ok(Self { problem_id, samples, mean_length, mean_acc })
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }
}

pub(crate) fn means(samples: &[CandidateSolution]) -> (f64, f64) {
    let k = samples.len() as f64;
    let len = samples.iter().map(|s| s.length as f64).sum::<f64>() / k;
    let acc = samples.iter().filter(|s| s.correct).count() as f64 / k;
    (len, acc)
}

/// Exact match of the span after the last `#` (up to end-of-sequence)
/// against the problem's answer. Malformed solutions score false.
pub fn check_answer(vocab: &Vocabulary, problem: &Problem, tokens: &[TokenId]) -> bool {
    let Some(delim) = vocab.id(crate::policy::vocab::ANSWER_DELIMITER) else {
        return false;
    };
    let Some(at) = tokens.iter().rposition(|&t| t == delim) else {
        return false;
    };
    let rest = &tokens[at + 1..];
    let span = match rest.iter().position(|&t| t == vocab.eos()) {
        Some(end) => &rest[..end],
        None => rest,
    };
    !span.is_empty() && span == problem.answer.as_slice()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(v: &Vocabulary) -> Problem {
        Problem::new(v, "p", v.encode("3+5+2=").unwrap(), v.encode("10").unwrap(), BTreeMap::new()).unwrap()
    }

    #[test]
    fn check_answer_hand_trace() {
        let v = Vocabulary::arithmetic();
        let p = problem(&v);
        assert!(check_answer(&v, &p, &v.encode("3+5=8;8+2=10;#10</s>").unwrap()));
        assert!(!check_answer(&v, &p, &v.encode("3+5=8;8+2=10;#11</s>").unwrap()));
        assert!(!check_answer(&v, &p, &v.encode("3+5=8;8+2=10;10</s>").unwrap()));
        assert!(!check_answer(&v, &p, &v.encode("#</s>").unwrap()));
        assert!(!check_answer(&v, &p, &[]));
        // the last delimiter wins
        assert!(check_answer(&v, &p, &v.encode("#9;#10</s>").unwrap()));
        assert!(!check_answer(&v, &p, &v.encode("#10;#9</s>").unwrap()));
        // truncated but complete span
        assert!(check_answer(&v, &p, &v.encode("#10").unwrap()));
        assert!(!check_answer(&v, &p, &v.encode("#1").unwrap()));
    }

    #[test]
    fn problem_invariants() {
        let v = Vocabulary::arithmetic();
        let eos = v.eos();
        assert!(Problem::new(&v, "a", vec![], vec![1], BTreeMap::new()).is_err());
        assert!(Problem::new(&v, "a", vec![1, eos], vec![1], BTreeMap::new()).is_err());
        assert!(Problem::new(&v, "a", vec![1], vec![], BTreeMap::new()).is_err());
        assert!(Problem::new(&v, "a", vec![1], vec![99], BTreeMap::new()).is_err());
        let p = problem(&v);
        assert_eq!(p.context(&v)[0], v.bos().unwrap());
        assert_eq!(p.context(&v).len(), p.prompt_tokens.len() + 1);
    }

    #[test]
    fn sample_set_means() {
        let v = Vocabulary::arithmetic();
        let p = problem(&v);
        let good = v.encode("#10</s>").unwrap();
        let bad = v.encode("3+5=8;8+2=11;#11</s>").unwrap();
        let samples = vec![
            CandidateSolution::new(&v, &p, good.clone(), -1.0, 0, false),
            CandidateSolution::new(&v, &p, bad, -2.0, 1, false),
            CandidateSolution::new(&v, &p, good, -1.0, 2, false),
        ];
        let set = SampleSet::from_samples("p", samples).unwrap();
        assert_eq!(set.k(), 3);
        assert!((set.mean_length - (4.0 + 17.0 + 4.0) / 3.0).abs() < 1e-12);
        assert!((set.mean_acc - 2.0 / 3.0).abs() < 1e-12);
        assert!(SampleSet::from_samples("p", vec![]).is_err());
    }
}
