use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{Error, Result};

/// A contiguous band of problems ordered from easiest (tier 0) to hardest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTier {
    pub tier_index: usize,
    pub problem_ids: Vec<String>,
    /// `[lowest, highest]` reference mean accuracy inside the tier.
    pub acc_range: [f64; 2],
}

/// Splits `total` items into `parts` contiguous chunks whose lengths differ by at
/// most one, larger chunks first.
pub(crate) fn balanced_sizes(total: usize, parts: usize) -> Vec<usize> {
    let (base, extra) = (total / parts, total % parts);
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Sorts by mean accuracy descending (ties by id) and cuts into `n_tiers`
/// balanced groups.
pub fn partition_by_difficulty(sets: &[SampleSet], n_tiers: usize) -> Result<Vec<DifficultyTier>> {
    if sets.is_empty() {
        return Err(Error::Input("no sample sets to partition".into()));
    }
    if n_tiers == 0 || n_tiers > sets.len() {
        return Err(Error::Config(format!(
            "n_tiers must be in 1..={}, got {n_tiers}",
            sets.len()
        )));
    }
    let mut order: Vec<&SampleSet> = sets.iter().collect();
    order.sort_by(|a, b| b.mean_acc.total_cmp(&a.mean_acc).then_with(|| a.problem_id.cmp(&b.problem_id)));
    let mut tiers = Vec::with_capacity(n_tiers);
    let mut rest = order.as_slice();
    for (tier_index, size) in balanced_sizes(sets.len(), n_tiers).into_iter().enumerate() {
        let (chunk, tail) = rest.split_at(size);
        rest = tail;
        tiers.push(DifficultyTier {
            tier_index,
            problem_ids: chunk.iter().map(|s| s.problem_id.clone()).collect(),
            acc_range: [chunk[size - 1].mean_acc, chunk[0].mean_acc],
        });
    }
    Ok(tiers)
}

/// Keeps problems whose reference mean accuracy is at least `min_acc`.
pub fn filter_by_min_acc(sets: &[SampleSet], min_acc: f64) -> Vec<SampleSet> {
    sets.iter().filter(|s| s.mean_acc >= min_acc).cloned().collect()
}
