//! Seeded nucleus (top-p) decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PolicyParameters, TokenId};
use crate::error::{Error, Result};

/// Slack for the cumulative-mass comparison so that `top_p = 1.0` and
/// exact-boundary masses are not lost to rounding.
const MASS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub top_p: f64,
    pub temperature: f64,
    /// Maximum number of sampled tokens before the sequence is cut.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { top_p: 0.95, temperature: 1.0, max_len: 40, seed: 0 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            errs.push(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            errs.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if self.max_len == 0 {
            errs.push("max_len must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Sampled solution tokens. `tokens` always ends with the end-of-sequence id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<TokenId>,
    /// The cutoff was hit and the end-of-sequence token was appended.
    pub truncated: bool,
}

/// Smallest prefix of the descending-sorted distribution (ties by ascending
/// id) whose mass reaches `top_p`, renormalized.
pub fn nucleus(probs: &[f64], top_p: f64) -> Vec<(TokenId, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push((i as TokenId, probs[i]));
        mass += probs[i];
        if mass >= top_p - MASS_EPS {
            break;
        }
    }
    kept.into_iter().map(|(t, p)| (t, p / mass)).collect()
}

pub(crate) fn tempered_probs(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Inverse-CDF draw from a normalized nucleus.
pub(crate) fn draw<R: Rng>(nucleus: &[(TokenId, f64)], rng: &mut R) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(t, p) in nucleus {
        acc += p;
        if u < acc {
            return t;
        }
    }
    nucleus.last().expect("nucleus is never empty").0
}

pub(crate) fn sample_with_rng<R: Rng>(
    params: &PolicyParameters,
    context: &[TokenId],
    eos: TokenId,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Sample> {
    let mut dec = params.start(context)?;
    let mut tokens = Vec::new();
    while tokens.len() < cfg.max_len {
        let probs = tempered_probs(&dec.logits(), cfg.temperature);
        let tok = draw(&nucleus(&probs, cfg.top_p), rng);
        tokens.push(tok);
        if tok == eos {
            return Ok(Sample { tokens, truncated: false });
        }
        dec.push(tok);
    }
    tokens.push(eos);
    Ok(Sample { tokens, truncated: true })
}

/// Autoregressive nucleus sampling seeded from `cfg.seed`.
pub fn sample_topp(
    params: &PolicyParameters,
    context: &[TokenId],
    eos: TokenId,
    cfg: &SamplingConfig,
) -> Result<Sample> {
    cfg.validate()?;
    if eos as usize >= params.shape.vocab_size {
        return Err(Error::Input(format!("end-of-sequence id {eos} outside vocabulary")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_with_rng(params, context, eos, cfg, &mut rng)
}

/// Argmax decoding (lowest id on ties), with the same cutoff rule as sampling.
pub fn greedy_decode(params: &PolicyParameters, context: &[TokenId], eos: TokenId, max_len: usize) -> Result<Sample> {
    if eos as usize >= params.shape.vocab_size {
        return Err(Error::Input(format!("end-of-sequence id {eos} outside vocabulary")));
    }
    let mut dec = params.start(context)?;
    let mut tokens = Vec::new();
    while tokens.len() < max_len {
        let logits = dec.logits();
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        let tok = best as TokenId;
        tokens.push(tok);
        if tok == eos {
            return Ok(Sample { tokens, truncated: false });
        }
        dec.push(tok);
    }
    tokens.push(eos);
    Ok(Sample { tokens, truncated: true })
}
