//! Accuracy, length, AES and the length-disharmony analysis.

mod aes;
mod disharmony;
mod report;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_answer, Problem};
use crate::error::{Error, Result};
use crate::policy::{sample_topp, PolicyParameters, SamplingConfig, Vocabulary};

pub use aes::{compute_aes, AesMode, AesWeights};
pub use disharmony::{bin_by_length, disharmony_report, BinScheme, DisharmonyReport, LengthInterval, DEFAULT_INTERVALS};
pub use report::{parse_csv, render_reports, reports_csv, CSV_HEADER};

/// One decoded evaluation answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedRecord {
    pub problem_id: String,
    pub length: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method_name: String,
    pub dataset: String,
    /// Fraction in `[0, 1]`; rendered as a percentage.
    pub accuracy: f64,
    pub mean_length: f64,
    /// Canonical AES against a baseline report, when one was supplied.
    pub aes: Option<f64>,
    /// Table-variant AES against the same baseline.
    pub aes_variant: Option<f64>,
    pub n_problems: usize,
    pub n_correct: usize,
    /// Decoding seed, recorded for disclosure.
    pub eval_seed: u64,
}

impl EvalReport {
    /// Fills both AES fields relative to `baseline`. A baseline that solved
    /// nothing has no defined AES; the fields then stay empty.
    pub fn with_baseline(mut self, baseline: &EvalReport, weights: AesWeights) -> Result<Self> {
        if baseline.n_correct == 0 {
            return Ok(self);
        }
        let b = (baseline.accuracy, baseline.mean_length);
        let m = (self.accuracy, self.mean_length);
        self.aes = Some(compute_aes(b, m, weights, AesMode::Canonical)?);
        self.aes_variant = Some(compute_aes(b, m, weights, AesMode::TableVariant)?);
        Ok(self)
    }
}

/// Means over pre-decoded answers.
pub fn aggregate(method_name: &str, dataset: &str, eval_seed: u64, records: &[DecodedRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Input("cannot evaluate zero problems".into()));
    }
    let n = records.len();
    let n_correct = records.iter().filter(|r| r.correct).count();
    let total_len: usize = records.iter().map(|r| r.length).sum();
    Ok(EvalReport {
        method_name: method_name.to_string(),
        dataset: dataset.to_string(),
        accuracy: n_correct as f64 / n as f64,
        mean_length: total_len as f64 / n as f64,
        aes: None,
        aes_variant: None,
        n_problems: n,
        n_correct,
        eval_seed,
    })
}

/// One seeded nucleus decode per problem; `cfg.seed` is the evaluation seed
/// and each problem draws from its own derived stream.
pub fn decode_all(
    policy: &PolicyParameters,
    vocab: &Vocabulary,
    problems: &[Problem],
    cfg: &SamplingConfig,
) -> Result<Vec<DecodedRecord>> {
    cfg.validate()?;
    problems
        .iter()
        .map(|p| {
            let sc = SamplingConfig { seed: crate::seed::derive(cfg.seed, &["eval", &p.id]), ..*cfg };
            let s = sample_topp(policy, &p.context(vocab), vocab.eos(), &sc)?;
            Ok(DecodedRecord { problem_id: p.id.clone(), length: s.tokens.len(), correct: check_answer(vocab, p, &s.tokens) })
        })
        .collect()
}

pub fn evaluate(
    policy: &PolicyParameters,
    vocab: &Vocabulary,
    problems: &[Problem],
    cfg: &SamplingConfig,
    method_name: &str,
    dataset: &str,
) -> Result<EvalReport> {
    if problems.is_empty() {
        return Err(Error::Input("cannot evaluate zero problems".into()));
    }
    aggregate(method_name, dataset, cfg.seed, &decode_all(policy, vocab, problems, cfg)?)
}
