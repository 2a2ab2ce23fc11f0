//! Baseline means over reference samples and the length-harmonizing reward.
//!
//! For a sample `y` of problem `x` with reference means `L̄(x)` and `Ā(x)`:
//!
//! ```text
//! R(x, y) = L̄(x) / L(y) - 1 + λ · (A(x, y) - Ā(x))
//! ```
//!
//! The length term is zero when the sample is exactly as long as the
//! reference expectation and positive when it is shorter.

use serde::{Deserialize, Serialize};

use crate::corpus::SampleSet;
use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero variance.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub problem_id: String,
    pub mean_length: f64,
    pub mean_acc: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub problem_id: String,
    pub sample_index: usize,
    pub length_term: f64,
    pub acc_term: f64,
    pub raw: f64,
    pub normalized: f64,
}

pub fn compute_baselines(set: &SampleSet) -> Result<BaselineStats> {
    if set.samples.is_empty() {
        return Err(Error::Input(format!("sample set {} is empty", set.problem_id)));
    }
    if let Some(s) = set.samples.iter().find(|s| s.length == 0) {
        return Err(Error::Input(format!("sample {} of {} has zero length", s.sample_index, set.problem_id)));
    }
    let k = set.samples.len();
    let total_len: f64 = set.samples.iter().map(|s| s.length as f64).sum();
    let correct = set.samples.iter().filter(|s| s.correct).count();
    Ok(BaselineStats {
        problem_id: set.problem_id.clone(),
        mean_length: total_len / k as f64,
        mean_acc: correct as f64 / k as f64,
        k,
    })
}

pub fn compute_rlh(
    sample_index: usize,
    length: usize,
    correct: bool,
    stats: &BaselineStats,
    lambda: f64,
) -> Result<RewardRecord> {
    if length == 0 {
        return Err(Error::Input("solution length must be >= 1".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Input(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(stats.mean_length > 0.0) {
        return Err(Error::Input(format!("baseline mean length for {} must be > 0", stats.problem_id)));
    }
    let length_term = stats.mean_length / length as f64 - 1.0;
    let acc_term = lambda * (f64::from(u8::from(correct)) - stats.mean_acc);
    let raw = length_term + acc_term;
    Ok(RewardRecord {
        problem_id: stats.problem_id.clone(),
        sample_index,
        length_term,
        acc_term,
        raw,
        normalized: raw,
    })
}

/// Z-scores `raw` over the whole slice (population standard deviation).
/// A zero-variance population normalizes to all zeros.
pub fn normalize_rewards(records: &mut [RewardRecord]) {
    if records.is_empty() {
        return;
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.raw).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.raw - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for r in records.iter_mut() {
        r.normalized = if std < MIN_STD { 0.0 } else { (r.raw - mean) / std };
    }
}

/// Raw rewards for every sample of every set, in set/sample order.
pub fn reward_table(sets: &[SampleSet], lambda: f64) -> Result<Vec<RewardRecord>> {
    let mut out = Vec::with_capacity(sets.iter().map(|s| s.samples.len()).sum());
    for set in sets {
        let stats = compute_baselines(set)?;
        for s in &set.samples {
            out.push(compute_rlh(s.sample_index, s.length, s.correct, &stats, lambda)?);
        }
    }
    Ok(out)
}
