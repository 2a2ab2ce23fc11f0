//! Off-policy clipped objective and the direct-preference loss.

use crate::error::{Error, Result};
use crate::policy::{accumulate_logprob_grad, seq_logprob, PolicyParameters, TokenId};

/// Log-ratios are clamped to `±RATIO_LOG_CLAMP` before exponentiation.
pub const RATIO_LOG_CLAMP: f64 = 30.0;

/// `π_θ(y|x) / π_ref(y|x)` from log-probabilities.
pub fn importance_ratio(logp_new: f64, logp_ref: f64) -> Result<f64> {
    if !logp_new.is_finite() || !logp_ref.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite log-probability (new {logp_new}, ref {logp_ref})"
        )));
    }
    Ok((logp_new - logp_ref).clamp(-RATIO_LOG_CLAMP, RATIO_LOG_CLAMP).exp())
}

/// `-min(r·R, clip(r, 1-ε, 1+ε)·R)`.
pub fn lh_loss(ratio: f64, reward: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    -(ratio * reward).min(clipped * reward)
}

/// True when the clipped branch strictly attains the minimum, i.e. the
/// sample contributes no gradient. Exact ties count as unclipped.
pub fn clip_active(ratio: f64, reward: f64, clip_eps: f64) -> bool {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    clipped * reward < ratio * reward
}

/// Per-sample diagnostics of the clipped objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhTerm {
    pub loss: f64,
    pub ratio: f64,
    pub clipped: bool,
    pub logprob: f64,
}

/// Adds `scale · ∇_θ loss` for one off-policy sample into `grad`.
///
/// The unclipped branch contributes `-r·R·∇ log π_θ(y|x)`; the clipped branch
/// has zero derivative.
pub fn accumulate_lh_gradient(
    params: &PolicyParameters,
    context: &[TokenId],
    tokens: &[TokenId],
    ref_logprob: f64,
    reward: f64,
    clip_eps: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<LhTerm> {
    let logprob = seq_logprob(params, context, tokens)?;
    let ratio = importance_ratio(logprob, ref_logprob)?;
    let clipped = clip_active(ratio, reward, clip_eps);
    if !clipped && reward != 0.0 {
        accumulate_logprob_grad(params, context, tokens, -scale * ratio * reward, grad)?;
    }
    Ok(LhTerm { loss: lh_loss(ratio, reward, clip_eps), ratio, clipped, logprob })
}

/// Gradient of the clipped loss for one sample.
pub fn lh_gradient(
    params: &PolicyParameters,
    context: &[TokenId],
    tokens: &[TokenId],
    ref_logprob: f64,
    reward: f64,
    clip_eps: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    accumulate_lh_gradient(params, context, tokens, ref_logprob, reward, clip_eps, 1.0, &mut grad)?;
    Ok(grad)
}

/// `log σ(z)` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One preference triple with reference log-probabilities already evaluated.
#[derive(Debug, Clone, Copy)]
pub struct DpoInput<'a> {
    pub context: &'a [TokenId],
    pub chosen: &'a [TokenId],
    pub rejected: &'a [TokenId],
    pub ref_chosen: f64,
    pub ref_rejected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoTerm {
    pub loss: f64,
    /// `(log π_θ - log π_ref)(chosen) - (log π_θ - log π_ref)(rejected)`.
    pub margin: f64,
}

pub fn dpo_loss(params: &PolicyParameters, input: &DpoInput<'_>, beta: f64) -> Result<DpoTerm> {
    let lc = seq_logprob(params, input.context, input.chosen)?;
    let lr = seq_logprob(params, input.context, input.rejected)?;
    let margin = (lc - input.ref_chosen) - (lr - input.ref_rejected);
    Ok(DpoTerm { loss: -log_sigmoid(beta * margin), margin })
}

/// Adds `scale · ∇_θ [-log σ(β · margin)]` into `grad`.
pub fn accumulate_dpo_gradient(
    params: &PolicyParameters,
    input: &DpoInput<'_>,
    beta: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<DpoTerm> {
    let term = dpo_loss(params, input, beta)?;
    // d/dmargin of -log σ(βm) is -β (1 - σ(βm))
    let coef = -beta * (1.0 - sigmoid(beta * term.margin));
    accumulate_logprob_grad(params, input.context, input.chosen, scale * coef, grad)?;
    accumulate_logprob_grad(params, input.context, input.rejected, -scale * coef, grad)?;
    Ok(term)
}
