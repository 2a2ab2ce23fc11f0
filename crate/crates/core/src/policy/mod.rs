//! Small autoregressive token policy.
//!
//! The network is a stacked GRU with a token embedding and a linear output
//! projection (see [`model`]). Everything a trainer needs is exposed as pure
//! functions of an immutable [`PolicyParameters`]: exact sequence
//! log-probabilities, their gradients, and seeded nucleus sampling.

pub mod checkpoint;
pub mod model;
pub mod sampling;
pub mod vocab;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use model::{HiddenState, ShapeMeta};
use model::{Layout, Net};
pub use sampling::{greedy_decode, nucleus, sample_topp, Sample, SamplingConfig};
pub use vocab::{TokenId, Vocabulary};

/// Architecture of a fresh policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub shape: ShapeMeta,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            shape: ShapeMeta { vocab_size: 16, embed_dim: 16, hidden_dim: 64, layers: 1 },
            init_scale: 0.1,
        }
    }
}

/// Flat parameter vector of the policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub values: Vec<f64>,
    pub shape: ShapeMeta,
    /// Number of updates applied since initialization.
    pub version: u64,
}

impl PolicyParameters {
    pub fn new(values: Vec<f64>, shape: ShapeMeta, version: u64) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(Error::Input(format!(
                "parameter vector has {} entries, shape implies {}",
                values.len(),
                shape.param_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        Ok(Self { values, shape, version })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.shape)
    }

    /// Index of the output-layer bias for `token` in `values`.
    pub fn output_bias_index(&self, token: TokenId) -> usize {
        self.layout().output_bias(token)
    }

    pub fn output_weight_index(&self, token: TokenId, unit: usize) -> usize {
        self.layout().output_weight(token, unit)
    }

    pub fn embedding_index(&self, token: TokenId, dim: usize) -> usize {
        self.layout().embedding(token, dim)
    }

    /// `values += step · direction`, bumping the version.
    pub fn apply_update(&mut self, direction: &[f64], step: f64) {
        debug_assert_eq!(direction.len(), self.values.len());
        for (v, d) in self.values.iter_mut().zip(direction) {
            *v += step * d;
        }
        self.version += 1;
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.shape.vocab_size) {
            return Err(Error::Input(format!(
                "token id {t} outside vocabulary of size {}",
                self.shape.vocab_size
            )));
        }
        Ok(())
    }

    /// Streaming access to next-token distributions.
    pub fn start(&self, context: &[TokenId]) -> Result<Decoder<'_>> {
        self.check_tokens(context)?;
        let layout = self.layout();
        let mut state = HiddenState::zeros(&self.shape);
        {
            let net = Net { p: &self.values, layout: &layout };
            for &t in context {
                state = net.step(&state, t);
            }
        }
        Ok(Decoder { params: self, layout, state })
    }
}

/// Incremental decoder holding the recurrent state.
pub struct Decoder<'a> {
    params: &'a PolicyParameters,
    layout: Layout,
    state: HiddenState,
}

impl Decoder<'_> {
    pub fn log_probs(&self) -> Vec<f64> {
        let net = Net { p: &self.params.values, layout: &self.layout };
        model::log_softmax(&net.logits(&self.state))
    }

    pub fn logits(&self) -> Vec<f64> {
        Net { p: &self.params.values, layout: &self.layout }.logits(&self.state)
    }

    pub fn push(&mut self, token: TokenId) {
        let net = Net { p: &self.params.values, layout: &self.layout };
        self.state = net.step(&self.state, token);
    }
}

pub fn init_policy(arch: &ArchConfig, seed: u64) -> Result<PolicyParameters> {
    arch.shape.validate()?;
    if !(arch.init_scale >= 0.0 && arch.init_scale.is_finite()) {
        return Err(Error::Config(format!("init_scale must be finite and >= 0, got {}", arch.init_scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..arch.shape.param_count())
        .map(|_| arch.init_scale * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();
    PolicyParameters::new(values, arch.shape, 0)
}

fn check_solution(params: &PolicyParameters, context: &[TokenId], tokens: &[TokenId]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Input("solution must contain at least one token".into()));
    }
    params.check_tokens(context)?;
    params.check_tokens(tokens)
}

/// `Σ_j log π(y_j | x, y_<j)` in nats.
pub fn seq_logprob(params: &PolicyParameters, context: &[TokenId], tokens: &[TokenId]) -> Result<f64> {
    check_solution(params, context, tokens)?;
    let layout = params.layout();
    Ok(Net { p: &params.values, layout: &layout }.seq_logprob(context, tokens))
}

/// `∇_θ log π(tokens | context)`.
pub fn grad_seq_logprob(params: &PolicyParameters, context: &[TokenId], tokens: &[TokenId]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    accumulate_logprob_grad(params, context, tokens, 1.0, &mut grad)?;
    Ok(grad)
}

/// Adds `scale · ∇ log π(tokens | context)` into `grad` and returns the log-probability.
pub fn accumulate_logprob_grad(
    params: &PolicyParameters,
    context: &[TokenId],
    tokens: &[TokenId],
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    check_solution(params, context, tokens)?;
    if grad.len() != params.len() {
        return Err(Error::Input("gradient buffer length mismatch".into()));
    }
    let layout = params.layout();
    Ok(Net { p: &params.values, layout: &layout }.seq_logprob_grad(context, tokens, scale, grad))
}

/// Hand-wired single-layer policy whose next token depends only on the
/// previous one: after `from` it puts logit `strength` on `to`. Tokens with no
/// transition get a uniform next-token distribution; so does the very first
/// prediction when the context is empty.
pub fn bigram_policy(vocab_size: usize, transitions: &[(TokenId, TokenId)], strength: f64) -> Result<PolicyParameters> {
    let shape = ShapeMeta { vocab_size, embed_dim: vocab_size, hidden_dim: vocab_size, layers: 1 };
    shape.validate()?;
    let layout = Layout::new(shape);
    let mut values = vec![0.0; shape.param_count()];
    for t in 0..vocab_size {
        // one-hot embedding, update gate shut so the state is tanh(10·x)
        values[layout.embedding(t as TokenId, t)] = 1.0;
        values[layout.update_gate_bias(0, t)] = -60.0;
        values[layout.candidate_input_weight(0, t, t)] = 10.0;
    }
    for &(from, to) in transitions {
        if from as usize >= vocab_size || to as usize >= vocab_size {
            return Err(Error::Input(format!("transition {from} -> {to} outside vocabulary")));
        }
        values[layout.output_weight(to, from as usize)] = strength;
    }
    PolicyParameters::new(values, shape, 0)
}

/// Frozen deep copy used as the reference policy.
pub fn snapshot_reference(params: &PolicyParameters) -> PolicyParameters {
    params.clone()
}
