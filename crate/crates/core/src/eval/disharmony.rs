//! Accuracy as a function of solution length, per problem and averaged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSolution, SampleSet};
use crate::error::{Error, Result};

pub const DEFAULT_INTERVALS: usize = 4;

/// How interval boundaries are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    /// Equal-size groups after sorting by `(length, sample_index)`.
    #[default]
    EqualCount,
    /// Equal-width length ranges between the shortest and longest solution;
    /// intervals may be empty.
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthInterval {
    /// Positions into the input slice, in `(length, sample_index)` order.
    pub members: Vec<usize>,
    pub correct: usize,
}

impl LengthInterval {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// `None` for an empty interval.
    pub fn accuracy(&self) -> Option<f64> {
        (!self.members.is_empty()).then(|| self.correct as f64 / self.members.len() as f64)
    }
}

pub fn bin_by_length(solutions: &[CandidateSolution], n_intervals: usize, scheme: BinScheme) -> Result<Vec<LengthInterval>> {
    if n_intervals == 0 {
        return Err(Error::Config("need at least one length interval".into()));
    }
    if solutions.len() < n_intervals {
        return Err(Error::Input(format!(
            "{} solutions cannot fill {n_intervals} length intervals",
            solutions.len()
        )));
    }
    let mut order: Vec<usize> = (0..solutions.len()).collect();
    order.sort_by_key(|&i| (solutions[i].length, solutions[i].sample_index));

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_intervals];
    match scheme {
        BinScheme::EqualCount => {
            let sizes = crate::corpus::balanced_sizes(order.len(), n_intervals);
            let mut rest = order.as_slice();
            for (g, size) in groups.iter_mut().zip(sizes) {
                let (head, tail) = rest.split_at(size);
                g.extend_from_slice(head);
                rest = tail;
            }
        }
        BinScheme::EqualWidth => {
            let lo = solutions[order[0]].length as f64;
            let hi = solutions[order[order.len() - 1]].length as f64;
            let width = (hi - lo) / n_intervals as f64;
            for &i in &order {
                let slot = if width > 0.0 {
                    (((solutions[i].length as f64 - lo) / width) as usize).min(n_intervals - 1)
                } else {
                    0
                };
                groups[slot].push(i);
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|members| {
            let correct = members.iter().filter(|&&i| solutions[i].correct).count();
            LengthInterval { members, correct }
        })
        .collect())
}

/// Per-problem interval accuracies and their cross-problem means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisharmonyReport {
    /// `problem_id → [(accuracy, count); n_intervals]`; empty intervals report
    /// accuracy 0 with count 0.
    pub per_problem: BTreeMap<String, Vec<(f64, usize)>>,
    /// Mean over problems of each interval's accuracy, skipping problems whose
    /// interval is empty.
    pub distribution: Vec<f64>,
    pub n_samples_per_problem: usize,
    pub n_problems: usize,
}

pub fn disharmony_report(sets: &[SampleSet], n_intervals: usize, scheme: BinScheme) -> Result<DisharmonyReport> {
    let Some(first) = sets.first() else {
        return Err(Error::Input("disharmony analysis needs at least one problem".into()));
    };
    let k = first.k();
    if let Some(bad) = sets.iter().find(|s| s.k() != k) {
        return Err(Error::Input(format!(
            "inconsistent samples per problem: {} has {}, {} has {k}",
            bad.problem_id,
            bad.k(),
            first.problem_id
        )));
    }
    let mut per_problem = BTreeMap::new();
    let mut sums = vec![0.0; n_intervals];
    let mut counts = vec![0usize; n_intervals];
    for set in sets {
        let intervals = bin_by_length(&set.samples, n_intervals, scheme)?;
        let row: Vec<(f64, usize)> = intervals.iter().map(|iv| (iv.accuracy().unwrap_or(0.0), iv.count())).collect();
        for (i, iv) in intervals.iter().enumerate() {
            if let Some(a) = iv.accuracy() {
                sums[i] += a;
                counts[i] += 1;
            }
        }
        if per_problem.insert(set.problem_id.clone(), row).is_some() {
            return Err(Error::Input(format!("problem {} appears twice", set.problem_id)));
        }
    }
    let distribution = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(DisharmonyReport { per_problem, distribution, n_samples_per_problem: k, n_problems: sets.len() })
}
