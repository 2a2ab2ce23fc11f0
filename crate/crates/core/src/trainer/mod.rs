//! Training: the off-policy length-harmonizing trainer, the SFT and DPO
//! baselines, and reference pre-sampling.
//!
//! All three trainers share one loop ([`run_loop`]): mini-batches are drawn
//! from a per-epoch seeded permutation, the averaged loss gradient is turned
//! into a step by the optimizer, and the step is scaled by the warmup/cosine
//! schedule. Batch composition depends only on `(seed, step)`, so a run can
//! be resumed from any [`Checkpoint`] and reproduce the uninterrupted
//! metrics exactly.

mod baselines;
mod lh;
pub mod objective;
mod optim;
mod presample;
pub mod schedule;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParameters;

pub use baselines::{
    build_dpo_pairs, build_sft_dataset, train_dpo, train_sft, DpoTriple, SftDataset, SftPair,
};
pub use lh::{begin_lh, resume_lh, select_training_samples, train_lh, LhOutcome};
pub use objective::{importance_ratio, lh_gradient, lh_loss};
pub use optim::{Optimizer, OptimizerKind};
pub use presample::{presample, sample_seed, PresampleConfig};
pub use schedule::lr_at;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lh,
    Sft,
    Dpo,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lh" => Ok(Method::Lh),
            "sft" => Ok(Method::Sft),
            "dpo" => Ok(Method::Dpo),
            other => Err(format!("unknown method {other:?} (expected lh, sft or dpo)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lh => "lh",
            Method::Sft => "sft",
            Method::Dpo => "dpo",
        })
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub clip_eps: f64,
    pub k_samples: usize,
    pub m_select: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub epochs: f64,
    pub max_len: usize,
    pub seed: u64,
    pub method: Method,
    pub dpo_beta: f64,
    pub optimizer: OptimizerKind,
    /// Feed z-scored rewards (true) or raw rewards (false) into the loss.
    pub normalize_rewards: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            clip_eps: 0.2,
            k_samples: 16,
            m_select: 2,
            batch_size: 32,
            lr: 1e-2,
            warmup_ratio: 0.1,
            epochs: 1.0,
            max_len: 40,
            seed: 0,
            method: Method::Lh,
            dpo_beta: 0.1,
            optimizer: OptimizerKind::Sgd,
            normalize_rewards: true,
        }
    }
}

impl TrainConfig {
    /// All violated constraints, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            v.push(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            v.push(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        if self.k_samples == 0 {
            v.push("k_samples must be >= 1".into());
        }
        if self.m_select == 0 {
            v.push("m_select must be >= 1".into());
        }
        if self.m_select > self.k_samples {
            v.push(format!(
                "m_select ({}) must not exceed k_samples ({})",
                self.m_select, self.k_samples
            ));
        }
        if self.batch_size == 0 {
            v.push("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.warmup_ratio >= 0.0 && self.warmup_ratio < 1.0) {
            v.push(format!("warmup_ratio must be in [0, 1), got {}", self.warmup_ratio));
        }
        if !(self.epochs > 0.0 && self.epochs.is_finite()) {
            v.push(format!("epochs must be > 0, got {}", self.epochs));
        }
        if self.max_len == 0 {
            v.push("max_len must be >= 1".into());
        }
        if !(self.dpo_beta > 0.0 && self.dpo_beta.is_finite()) {
            v.push(format!("dpo_beta must be > 0, got {}", self.dpo_beta));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// One optimizer step's diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// Position in the batch stream; enough to resume exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: PolicyParameters,
    pub config: TrainConfig,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub total_steps: usize,
    pub rng_state: RngState,
    pub optimizer: Optimizer,
    pub metrics_log: Vec<StepRecord>,
}

impl Checkpoint {
    pub fn is_finished(&self) -> bool {
        self.step >= self.total_steps
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Metrics log as CSV: `step,lr,loss,mean_ratio,clip_fraction`.
pub fn metrics_csv(log: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,loss,mean_ratio,clip_fraction\n");
    for r in log {
        out.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.step, r.lr, r.loss, r.mean_ratio, r.clip_fraction));
    }
    out
}

/// Aggregate of one mini-batch.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct BatchStats {
    pub loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

pub(crate) fn steps_per_epoch(n_items: usize, batch_size: usize) -> usize {
    n_items.div_ceil(batch_size)
}

pub(crate) fn total_steps(n_items: usize, cfg: &TrainConfig) -> usize {
    ((cfg.epochs * steps_per_epoch(n_items, cfg.batch_size) as f64).ceil() as usize).max(1)
}

/// Item indices of mini-batch `step`.
pub(crate) fn batch_indices(n_items: usize, cfg: &TrainConfig, step: usize) -> Vec<usize> {
    let per_epoch = steps_per_epoch(n_items, cfg.batch_size);
    let (epoch, j) = (step / per_epoch, step % per_epoch);
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut crate::seed::rng(cfg.seed, &["epoch", &epoch.to_string()]));
    let start = j * cfg.batch_size;
    order[start..(start + cfg.batch_size).min(n_items)].to_vec()
}

/// Fresh checkpoint for a run over `n_items` training items.
pub(crate) fn start_checkpoint(params: PolicyParameters, n_items: usize, cfg: &TrainConfig) -> Checkpoint {
    let n = params.len();
    Checkpoint {
        params,
        config: cfg.clone(),
        step: 0,
        total_steps: total_steps(n_items, cfg),
        rng_state: RngState { seed: cfg.seed, next_step: 0 },
        optimizer: Optimizer::new(cfg.optimizer, n),
        metrics_log: Vec::new(),
    }
}

/// Runs optimizer steps until `stop_at` (or the end of training).
///
/// `batch_grad` receives the current parameters and the batch item indices,
/// accumulates the mean loss gradient into the provided buffer, and returns
/// the batch statistics.
pub(crate) fn run_loop<F>(ckpt: &mut Checkpoint, n_items: usize, stop_at: Option<usize>, mut batch_grad: F) -> Result<()>
where
    F: FnMut(&PolicyParameters, &[usize], &mut [f64]) -> Result<BatchStats>,
{
    let cfg = ckpt.config.clone();
    let end = stop_at.map_or(ckpt.total_steps, |s| s.min(ckpt.total_steps));
    while ckpt.step < end {
        let step = ckpt.step;
        let batch = batch_indices(n_items, &cfg, step);
        let mut grad = vec![0.0; ckpt.params.len()];
        let stats = batch_grad(&ckpt.params, &batch, &mut grad)?;
        let lr = lr_at(step, ckpt.total_steps, cfg.lr, cfg.warmup_ratio);
        let record = StepRecord {
            step,
            lr,
            loss: stats.loss,
            mean_ratio: stats.mean_ratio,
            clip_fraction: stats.clip_fraction,
        };
        if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            ckpt.metrics_log.push(record);
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at step {step} (loss {}, mean ratio {})",
                stats.loss, stats.mean_ratio
            )));
        }
        let dir = ckpt.optimizer.direction(&grad);
        ckpt.params.apply_update(&dir, lr);
        ckpt.metrics_log.push(record);
        ckpt.step += 1;
        ckpt.rng_state.next_step = ckpt.step;
    }
    Ok(())
}
