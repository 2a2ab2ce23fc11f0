//! Oracles and property checks shared by the integration tests and the
//! acceptance harness. Everything here is written against the public API
//! only and recomputes expected values independently of the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lenharm::corpus::{CandidateSolution, SampleSet};
use lenharm::eval::{bin_by_length, compute_aes, AesMode, AesWeights, BinScheme};
use lenharm::policy::{grad_seq_logprob, init_policy, seq_logprob, ArchConfig, PolicyParameters, ShapeMeta, TokenId};
use lenharm::trainer::objective::{accumulate_dpo_gradient, dpo_loss, DpoInput};
use lenharm::trainer::{build_dpo_pairs, build_sft_dataset, lh_gradient, lh_loss};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor of the relative error. Coordinates whose true gradient
/// is below this are compared in absolute terms, where central differences
/// carry ~1e-10 of rounding noise.
pub const FD_FLOOR: f64 = 1e-4;

pub fn central_difference(params: &PolicyParameters, f: impl Fn(&PolicyParameters) -> f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..params.len())
        .map(|i| {
            let x = p.values[i];
            p.values[i] = x + FD_STEP;
            let up = f(&p);
            p.values[i] = x - FD_STEP;
            let down = f(&p);
            p.values[i] = x;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR))
        .fold(0.0, f64::max)
}

/// A random toy model with a prompt and an EOS-terminated solution.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub params: PolicyParameters,
    pub context: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    pub other: Vec<TokenId>,
}

fn terminated(body: Vec<TokenId>, eos: TokenId) -> Vec<TokenId> {
    body.into_iter().map(|t| if t == eos { 0 } else { t }).chain([eos]).collect()
}

pub fn grad_case() -> impl Strategy<Value = GradCase> {
    (3usize..=6, 1usize..=4, 1usize..=5, 1usize..=2, any::<u64>(), 0.2f64..1.0)
        .prop_flat_map(|(v, e, h, layers, seed, scale)| {
            let tok = 0..v as TokenId;
            (
                Just((v, e, h, layers, seed, scale)),
                prop::collection::vec(tok.clone(), 1..4),
                prop::collection::vec(tok.clone(), 0..6),
                prop::collection::vec(tok, 0..6),
            )
        })
        .prop_map(|((v, e, h, layers, seed, scale), context, body, other)| {
            let arch = ArchConfig { shape: ShapeMeta { vocab_size: v, embed_dim: e, hidden_dim: h, layers }, init_scale: scale };
            let eos = (v - 1) as TokenId;
            GradCase {
                params: init_policy(&arch, seed).unwrap(),
                context,
                tokens: terminated(body, eos),
                other: terminated(other, eos),
            }
        })
}

pub fn check_logprob_gradient(c: &GradCase) -> Result<f64, TestCaseError> {
    let g = grad_seq_logprob(&c.params, &c.context, &c.tokens).unwrap();
    let fd = central_difference(&c.params, |p| seq_logprob(p, &c.context, &c.tokens).unwrap());
    let err = max_rel_err(&g, &fd);
    prop_assert!(err <= FD_TOL, "log-prob gradient rel err {err}");
    Ok(err)
}

/// Log-ratio offsets that keep `r = e^δ` at least 0.05 away from `1 ± ε` for
/// ε = 0.2, so a finite-difference step never crosses a branch.
pub fn log_ratio_offset() -> impl Strategy<Value = f64> {
    prop_oneof![(-1.5f64..-0.30), (-0.17f64..0.13), (0.22f64..1.5)]
}

pub fn check_lh_gradient(c: &GradCase, delta: f64, reward: f64) -> Result<f64, TestCaseError> {
    let eps = 0.2;
    let ref_lp = seq_logprob(&c.params, &c.context, &c.tokens).unwrap() - delta;
    let g = lh_gradient(&c.params, &c.context, &c.tokens, ref_lp, reward, eps).unwrap();
    let fd = central_difference(&c.params, |p| {
        let lp = seq_logprob(p, &c.context, &c.tokens).unwrap();
        lh_loss((lp - ref_lp).exp(), reward, eps)
    });
    let err = max_rel_err(&g, &fd);
    prop_assert!(err <= FD_TOL, "lh gradient rel err {err} (delta {delta}, reward {reward})");
    Ok(err)
}

pub fn check_dpo_gradient(c: &GradCase, ref_chosen: f64, ref_rejected: f64, beta: f64) -> Result<f64, TestCaseError> {
    let input = DpoInput { context: &c.context, chosen: &c.tokens, rejected: &c.other, ref_chosen, ref_rejected };
    let mut g = vec![0.0; c.params.len()];
    accumulate_dpo_gradient(&c.params, &input, beta, 1.0, &mut g).unwrap();
    // independent loss: -log σ(β m) = log(1 + e^{-β m})
    let fd = central_difference(&c.params, |p| {
        let lc = seq_logprob(p, &c.context, &c.tokens).unwrap();
        let lr = seq_logprob(p, &c.context, &c.other).unwrap();
        let m = (lc - ref_chosen) - (lr - ref_rejected);
        (-beta * m).exp().ln_1p()
    });
    let lib = dpo_loss(&c.params, &input, beta).unwrap().loss;
    let lc = seq_logprob(&c.params, &c.context, &c.tokens).unwrap();
    let lr = seq_logprob(&c.params, &c.context, &c.other).unwrap();
    let own = (-beta * ((lc - ref_chosen) - (lr - ref_rejected))).exp().ln_1p();
    prop_assert!((lib - own).abs() <= 1e-12 * own.abs().max(1.0));
    let err = max_rel_err(&g, &fd);
    prop_assert!(err <= FD_TOL, "dpo gradient rel err {err}");
    Ok(err)
}

// ---------------------------------------------------------------------------
// Length binning
// ---------------------------------------------------------------------------

pub fn solution(problem: &str, sample_index: usize, length: usize, correct: bool) -> CandidateSolution {
    CandidateSolution {
        problem_id: problem.to_string(),
        tokens: vec![0; length],
        length,
        correct,
        ref_logprob: -(length as f64),
        sample_index,
        truncated: false,
    }
}

/// Solutions with shuffled sample indices and a narrow length range (ties).
pub fn solutions(min: usize, max: usize) -> impl Strategy<Value = Vec<CandidateSolution>> {
    prop::collection::vec((1usize..12, any::<bool>()), min..=max)
        .prop_flat_map(|raw| {
            let n = raw.len();
            (Just(raw), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
        .prop_map(|(raw, idx)| raw.into_iter().zip(idx).map(|((len, ok), i)| solution("p", i, len, ok)).collect())
}

pub fn check_binning(sols: &[CandidateSolution], n: usize, scheme: BinScheme) -> Result<(), TestCaseError> {
    let bins = bin_by_length(sols, n, scheme).unwrap();
    prop_assert_eq!(bins.len(), n);
    let mut seen = vec![0usize; sols.len()];
    for b in &bins {
        for &m in &b.members {
            seen[m] += 1;
        }
        prop_assert_eq!(b.correct, b.members.iter().filter(|&&m| sols[m].correct).count());
    }
    prop_assert!(seen.iter().all(|&c| c == 1), "members must cover the input exactly once");
    let nonempty: Vec<_> = bins.iter().filter(|b| !b.members.is_empty()).collect();
    for w in nonempty.windows(2) {
        let hi = w[0].members.iter().map(|&m| sols[m].length).max().unwrap();
        let lo = w[1].members.iter().map(|&m| sols[m].length).min().unwrap();
        prop_assert!(hi <= lo, "interval boundaries out of order: {hi} > {lo}");
    }
    if scheme == BinScheme::EqualCount {
        let sizes: Vec<usize> = bins.iter().map(|b| b.count()).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "unbalanced sizes {sizes:?}");
    }
    Ok(())
}

/// Two problems with eight solutions each whose quartile accuracies are
/// `[1, .5, .5, 0]` and `[0, .5, .5, 1]`, with sample indices scrambled.
pub fn disharmony_fixture() -> (Vec<SampleSet>, BTreeMap<String, Vec<(f64, usize)>>, Vec<f64>) {
    let lengths = [10, 11, 20, 21, 30, 31, 40, 41];
    let a_ok = [true, true, true, false, false, true, false, false];
    let b_ok = [false, false, false, true, true, false, true, true];
    let scramble = [5, 2, 7, 0, 3, 6, 1, 4];
    let build = |id: &str, ok: &[bool; 8]| {
        let mut s: Vec<_> = (0..8).map(|i| solution(id, scramble[i], lengths[i], ok[i])).collect();
        s.reverse();
        SampleSet::from_samples(id, s).unwrap()
    };
    let sets = vec![build("A", &a_ok), build("B", &b_ok)];
    let per_problem = BTreeMap::from([
        ("A".to_string(), vec![(1.0, 2), (0.5, 2), (0.5, 2), (0.0, 2)]),
        ("B".to_string(), vec![(0.0, 2), (0.5, 2), (0.5, 2), (1.0, 2)]),
    ]);
    (sets, per_problem, vec![0.5; 4])
}

// ---------------------------------------------------------------------------
// Baseline builders, scanned without sorting
// ---------------------------------------------------------------------------

fn better_short(a: &CandidateSolution, b: &CandidateSolution) -> bool {
    a.length < b.length || (a.length == b.length && a.sample_index < b.sample_index)
}

fn scan_shortest_correct(samples: &[CandidateSolution]) -> Vec<&CandidateSolution> {
    let mut first: Option<&CandidateSolution> = None;
    for s in samples.iter().filter(|s| s.correct) {
        if first.map_or(true, |f| better_short(s, f)) {
            first = Some(s);
        }
    }
    let Some(first) = first else { return vec![] };
    let mut second: Option<&CandidateSolution> = None;
    for s in samples.iter().filter(|s| s.correct && s.sample_index != first.sample_index) {
        if second.map_or(true, |f| better_short(s, f)) {
            second = Some(s);
        }
    }
    std::iter::once(first).chain(second).collect()
}

fn scan_longest(samples: &[CandidateSolution]) -> &CandidateSolution {
    let mut best = &samples[0];
    for s in &samples[1..] {
        if s.length > best.length || (s.length == best.length && s.sample_index < best.sample_index) {
            best = s;
        }
    }
    best
}

pub type SftOracle = (Vec<(String, Vec<TokenId>)>, usize);
pub type DpoOracle = (Vec<(String, Vec<TokenId>, Vec<TokenId>)>, usize);

pub fn oracle_sft(sets: &[SampleSet]) -> SftOracle {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for set in sets {
        let picked = scan_shortest_correct(&set.samples);
        skipped += usize::from(picked.is_empty());
        pairs.extend(picked.into_iter().map(|s| (set.problem_id.clone(), s.tokens.clone())));
    }
    (pairs, skipped)
}

pub fn oracle_dpo(sets: &[SampleSet]) -> DpoOracle {
    let mut triples = Vec::new();
    let mut skipped = 0;
    for set in sets {
        let rejected = scan_longest(&set.samples);
        let mut any = false;
        for chosen in scan_shortest_correct(&set.samples) {
            if chosen.sample_index != rejected.sample_index && chosen.tokens != rejected.tokens {
                triples.push((set.problem_id.clone(), chosen.tokens.clone(), rejected.tokens.clone()));
                any = true;
            }
        }
        skipped += usize::from(!any);
    }
    (triples, skipped)
}

/// Sample sets over a two-letter alphabet and lengths 1..=4, so equal
/// lengths, identical token strings, all-wrong and single-sample sets are
/// all frequent.
pub fn sample_sets() -> impl Strategy<Value = Vec<SampleSet>> {
    let set = prop::collection::vec((prop::collection::vec(0u32..2, 1..=4), any::<bool>()), 1..=6)
        .prop_flat_map(|raw| {
            let n = raw.len();
            (Just(raw), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        });
    prop::collection::vec(set, 1..=4).prop_map(|sets| {
        sets.into_iter()
            .enumerate()
            .map(|(p, (raw, idx))| {
                let id = format!("q{p}");
                let samples = raw
                    .into_iter()
                    .zip(idx)
                    .map(|((tokens, ok), i)| CandidateSolution {
                        problem_id: id.clone(),
                        length: tokens.len(),
                        tokens,
                        correct: ok,
                        ref_logprob: -1.0,
                        sample_index: i,
                        truncated: false,
                    })
                    .collect();
                SampleSet::from_samples(id, samples).unwrap()
            })
            .collect()
    })
}

pub fn check_builders(sets: &[SampleSet]) -> Result<(), TestCaseError> {
    let sft = build_sft_dataset(sets);
    let got: Vec<_> = sft.pairs.iter().map(|p| (p.problem_id.clone(), p.tokens.clone())).collect();
    prop_assert_eq!((got, sft.skipped), oracle_sft(sets));
    let (triples, skipped) = build_dpo_pairs(sets);
    let got: Vec<_> = triples.iter().map(|t| (t.problem_id.clone(), t.chosen.clone(), t.rejected.clone())).collect();
    prop_assert_eq!((got, skipped), oracle_dpo(sets));
    Ok(())
}

// ---------------------------------------------------------------------------
// AES and the published table
// ---------------------------------------------------------------------------

/// `(accuracy %, length)` per dataset column: MATH, GSM8K, GaoKao, AVERAGE.
pub type Row = [(f64, f64); 4];

pub struct Block {
    pub model: &'static str,
    pub baseline: Row,
    /// `(method, measured row, printed AES per column)`.
    pub methods: [(&'static str, Row, [f64; 4]); 3],
}

pub const COLUMNS: [&str; 4] = ["MATH", "GSM8K", "GaoKao", "AVERAGE"];

pub fn table2() -> [Block; 2] {
    [
        Block {
            model: "Marco-o1",
            baseline: [(73.8, 1156.0), (89.2, 530.0), (57.1, 1112.0), (73.4, 932.0)],
            methods: [
                ("SFT", [(73.6, 1076.0), (89.9, 497.0), (56.3, 1066.0), (73.3, 880.0)], [0.08, 0.09, 0.08, 0.08]),
                ("DPO", [(71.8, 761.0), (88.6, 410.0), (56.6, 780.0), (72.3, 650.0)], [0.42, 0.25, 0.32, 0.33]),
                ("O1-Pruner", [(77.5, 657.0), (91.4, 343.0), (61.6, 664.0), (76.8, 554.0)], [0.58, 0.43, 0.64, 0.55]),
            ],
        },
        Block {
            model: "QwQ-32B-Preview",
            baseline: [(90.6, 2191.0), (95.1, 777.0), (79.0, 2183.0), (88.2, 1717.0)],
            methods: [
                ("SFT", [(90.4, 2031.0), (95.7, 717.0), (79.5, 2112.0), (88.5, 1620.0)], [0.08, 0.10, 0.05, 0.08]),
                ("DPO", [(91.7, 1999.0), (95.3, 704.0), (79.7, 2021.0), (88.9, 1575.0)], [0.12, 0.10, 0.10, 0.11]),
                ("O1-Pruner", [(91.0, 1385.0), (96.5, 534.0), (80.3, 1446.0), (89.3, 1121.0)], [0.38, 0.36, 0.39, 0.38]),
            ],
        },
    ]
}

/// Hand formula, written out separately from the library.
pub fn aes_by_hand(base: (f64, f64), model: (f64, f64), canonical: bool) -> f64 {
    let d_len = (base.1 - model.1) / base.1;
    let d_acc = (model.0 - base.0) / base.0;
    if canonical && d_acc < 0.0 {
        d_len - 5.0 * d_acc.abs()
    } else {
        d_len + 3.0 * d_acc.abs()
    }
}

pub struct CellCheck {
    pub label: String,
    pub printed: f64,
    pub computed: f64,
    pub tolerance: f64,
}

impl CellCheck {
    pub fn ok(&self) -> bool {
        (self.computed - self.printed).abs() <= self.tolerance
    }
}

/// All 24 table cells. Dataset columns use the printed pair directly; the
/// AVERAGE column is the mean of the three per-dataset scores.
pub fn table2_cells() -> Vec<CellCheck> {
    let w = AesWeights::default();
    let mut out = Vec::new();
    for block in table2() {
        for (method, row, printed) in &block.methods {
            let per: Vec<f64> = (0..3)
                .map(|c| compute_aes(block.baseline[c], row[c], w, AesMode::TableVariant).unwrap())
                .collect();
            for c in 0..4 {
                let (computed, tolerance) = if c < 3 { (per[c], 0.01) } else { (per.iter().sum::<f64>() / 3.0, 0.02) };
                out.push(CellCheck {
                    label: format!("{}/{}/{}", block.model, method, COLUMNS[c]),
                    printed: printed[c],
                    computed,
                    tolerance,
                });
            }
        }
    }
    out
}

pub fn check_aes_invariants(base: (f64, f64), model: (f64, f64), other_len: f64) -> Result<(), TestCaseError> {
    let w = AesWeights::default();
    let canon = compute_aes(base, model, w, AesMode::Canonical).unwrap();
    let variant = compute_aes(base, model, w, AesMode::TableVariant).unwrap();
    let scale = 1.0 + canon.abs().max(variant.abs());
    prop_assert!((canon - aes_by_hand(base, model, true)).abs() <= 1e-12 * scale);
    prop_assert!((variant - aes_by_hand(base, model, false)).abs() <= 1e-12 * scale);
    prop_assert!(canon <= variant);
    prop_assert_eq!(canon == variant, model.0 >= base.0);
    // linear in ΔLength: swapping the model length shifts both modes by α·Δ
    let moved = (model.0, other_len);
    let shift = (model.1 - other_len) / base.1;
    for mode in [AesMode::Canonical, AesMode::TableVariant] {
        let a = compute_aes(base, model, w, mode).unwrap();
        let b = compute_aes(base, moved, w, mode).unwrap();
        prop_assert!((b - a - shift).abs() <= 1e-9 * (1.0 + shift.abs() + a.abs()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Runs `test` on `cases` generated inputs with a fixed RNG so the acceptance
/// report is reproducible.
pub fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(config_algo()));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn config_algo() -> proptest::test_runner::RngAlgorithm {
    proptest::test_runner::RngAlgorithm::ChaCha
}
