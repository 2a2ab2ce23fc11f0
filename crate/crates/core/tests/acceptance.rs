//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Criteria 5 and 6 share one desk-scale run, which
//! takes a few minutes.

mod common;

use std::cell::{Cell, RefCell};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use lenharm::cli::RunManifest;
use lenharm::corpus::{gen_problems, TaskConfig};
use lenharm::eval::{compute_aes, disharmony_report, AesMode, AesWeights, BinScheme, DisharmonyReport};
use lenharm::experiment::{seed_mean, DeskProtocol};
use lenharm::policy::{init_policy, seq_logprob, ArchConfig, SamplingConfig, ShapeMeta, Vocabulary};
use lenharm::reward::{compute_rlh, normalize_rewards, BaselineStats, RewardRecord};
use lenharm::trainer::{lh_gradient, lh_loss, presample, PresampleConfig};
use proptest::prelude::*;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -------------------------------------------------------------------------

fn aes_oracle() -> Verdict {
    let start = Instant::now();
    let cells = table2_cells();
    let bad: Vec<String> = cells
        .iter()
        .filter(|c| !c.ok())
        .map(|c| format!("{} {:.4} vs {}", c.label, c.computed, c.printed))
        .collect();
    ensure(cells.len() == 24, || format!("expected 24 cells, built {}", cells.len()))?;
    ensure(bad.is_empty(), || format!("cells off: {}", bad.join("; ")))?;
    let w = AesWeights::default();
    let aes = |b, m, mode| compute_aes(b, m, w, mode).unwrap();
    let marco_math = (73.8, 1156.0);
    for mode in [AesMode::Canonical, AesMode::TableVariant] {
        let a = aes(marco_math, (77.5, 657.0), mode);
        ensure((a - 0.58).abs() <= 0.005, || format!("Marco/MATH O1-Pruner {a:.4} ({mode:?})"))?;
        let a = aes((89.2, 530.0), (91.4, 343.0), mode);
        ensure((a - 0.43).abs() <= 0.005, || format!("Marco/GSM8K O1-Pruner {a:.4} ({mode:?})"))?;
    }
    let q = aes((90.6, 2191.0), (91.0, 1385.0), AesMode::TableVariant);
    ensure((q - 0.38).abs() <= 0.01, || format!("QwQ/MATH O1-Pruner {q:.4}"))?;
    let dpo_v = aes(marco_math, (71.8, 761.0), AesMode::TableVariant);
    let dpo_c = aes(marco_math, (71.8, 761.0), AesMode::Canonical);
    ensure((dpo_v - 0.42).abs() <= 0.01 && (dpo_v - 0.423).abs() < 5e-4, || format!("Marco/MATH DPO variant {dpo_v:.4}"))?;
    ensure((dpo_c - 0.206).abs() < 5e-4, || format!("Marco/MATH DPO canonical {dpo_c:.4}"))?;
    let worst = cells.iter().map(|c| (c.computed - c.printed).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("24/24 cells, worst |Δ| {worst:.4}; DPO MATH variant {dpo_v:.3} vs canonical {dpo_c:.3}"))
}

// 2 -------------------------------------------------------------------------

fn gradients() -> Verdict {
    let worst = [Cell::new(0.0f64), Cell::new(0.0), Cell::new(0.0)];
    let bump = |i: usize, e: f64| worst[i].set(worst[i].get().max(e));
    run_property(100, grad_case(), |c| check_logprob_gradient(&c).map(|e| bump(0, e)))?;
    let reward = prop_oneof![(-3.0f64..-0.1), (0.1f64..3.0)];
    run_property(100, (grad_case(), log_ratio_offset(), reward), |(c, d, r)| {
        check_lh_gradient(&c, d, r).map(|e| bump(1, e))
    })?;
    run_property(100, (grad_case(), -12.0f64..-0.5, -12.0f64..-0.5, 0.05f64..2.0), |(c, a, b, beta)| {
        check_dpo_gradient(&c, a, b, beta).map(|e| bump(2, e))
    })?;
    Ok(format!(
        "100 cases each; max rel err log-prob {:.1e}, LH {:.1e}, DPO {:.1e} (limit {FD_TOL:.0e})",
        worst[0].get(),
        worst[1].get(),
        worst[2].get()
    ))
}

// 3 -------------------------------------------------------------------------

fn clipped_loss() -> Verdict {
    ensure(lh_loss(1.0, 2.0, 0.2) == -2.0, || "lh_loss(1, 2, 0.2) != -2".into())?;
    ensure(lh_loss(2.0, 1.0, 0.2) == -1.2, || "lh_loss(2, 1, 0.2) != -1.2".into())?;
    ensure(lh_loss(0.5, -1.0, 0.2) == 0.8, || "lh_loss(0.5, -1, 0.2) != 0.8".into())?;
    for r in [-7.5, -1.0, -1e-3, 0.0, 0.25, 3.0, 1e6] {
        for eps in [0.01, 0.2, 0.5, 0.99] {
            ensure(lh_loss(1.0, r, eps) == -r, || format!("lh_loss(1, {r}, {eps}) != -R"))?;
        }
    }
    let arch = ArchConfig { shape: ShapeMeta { vocab_size: 16, embed_dim: 4, hidden_dim: 6, layers: 1 }, init_scale: 0.4 };
    let params = init_policy(&arch, 1).unwrap();
    let (ctx, toks) = ([14, 3, 10, 5, 11], [13, 8, 15]);
    let lp = seq_logprob(&params, &ctx, &toks).unwrap();
    let g = lh_gradient(&params, &ctx, &toks, lp - 2f64.ln(), 1.0, 0.2).unwrap();
    ensure(g.iter().all(|&x| x == 0.0), || "clipped branch produced a nonzero gradient".into())?;
    Ok("worked examples -2, -1.2, 0.8 and the zero gradient at r = 2 hold exactly".into())
}

// 4 -------------------------------------------------------------------------

fn reward_identities() -> Verdict {
    for (l, ok) in [(1usize, true), (7, false), (500, true), (1000, false)] {
        let stats = BaselineStats { problem_id: "p".into(), mean_length: l as f64, mean_acc: if ok { 1.0 } else { 0.0 }, k: 16 };
        for lambda in [0.0, 2.0, 5.0] {
            let r = compute_rlh(0, l, ok, &stats, lambda).unwrap();
            ensure(r.raw == 0.0, || format!("R(L = L̄, A = Ā) = {} at L {l}", r.raw))?;
        }
    }
    let worst = Cell::new((0.0f64, 0.0f64));
    run_property(500, prop::collection::vec(-100.0f64..100.0, 2..300), |raws| {
        let spread = raws.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - raws.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let mut recs: Vec<RewardRecord> = raws
            .iter()
            .map(|&raw| RewardRecord { problem_id: "p".into(), sample_index: 0, length_term: raw, acc_term: 0.0, raw, normalized: 0.0 })
            .collect();
        normalize_rewards(&mut recs);
        let n = recs.len() as f64;
        let mean = recs.iter().map(|r| r.normalized).sum::<f64>() / n;
        let std = (recs.iter().map(|r| (r.normalized - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (m, s) = worst.get();
        worst.set((m.max(mean.abs()), s.max((std - 1.0).abs())));
        prop_assert!(mean.abs() <= 1e-9 && (std - 1.0).abs() <= 1e-9);
        Ok(())
    })?;
    let (m, s) = worst.get();
    Ok(format!("R = 0 at the baseline; 500 cases: max |mean| {m:.1e}, max |std - 1| {s:.1e}"))
}

// 5 and 6 -----------------------------------------------------------------

struct Desk {
    a0: f64,
    l0: f64,
    by_lambda: Vec<(f64, f64, f64)>,
    n_train: usize,
    elapsed: Duration,
}

fn desk_run() -> Result<Desk, String> {
    let start = Instant::now();
    let proto = DeskProtocol::default();
    let vocab = Vocabulary::arithmetic();
    let e = |e: lenharm::Error| e.to_string();
    let data = proto.datasets(&vocab).map_err(e)?;
    let reference = proto.pretrain(&vocab, &data.pretrain).map_err(e)?;
    let sets = proto.presample(&reference, &vocab, &data.train).map_err(e)?;
    let baseline = proto.evaluate(&reference, &vocab, &data.eval, "reference").map_err(e)?;
    let mut by_lambda = Vec::new();
    for lambda in [0.0, 2.0, 5.0] {
        let runs = proto.lh_runs(&vocab, &reference, &data, &sets, lambda, &baseline).map_err(e)?;
        for r in &runs {
            println!("    {:<22} acc {:.3}  len {:.2}", r.method_name, r.accuracy, r.mean_length);
        }
        let (acc, len) = seed_mean(&runs);
        by_lambda.push((lambda, acc, len));
    }
    Ok(Desk {
        a0: baseline.accuracy,
        l0: baseline.mean_length,
        by_lambda,
        n_train: data.train.len(),
        elapsed: start.elapsed(),
    })
}

fn desk_claim(d: &Desk) -> Verdict {
    let (_, acc, len) = d.by_lambda.iter().copied().find(|x| x.0 == 2.0).unwrap();
    ensure(d.n_train >= 200, || format!("only {} training problems", d.n_train))?;
    ensure(d.a0 >= 0.7, || format!("reference accuracy A0 {:.3} < 0.7", d.a0))?;
    let detail = format!(
        "A0 {:.3}, L0 {:.2} -> λ=2 mean of 3 seeds: acc {acc:.3}, len {len:.2} ({:.3}·L0); {:.0?}",
        d.a0,
        d.l0,
        len / d.l0,
        d.elapsed
    );
    ensure(len <= 0.8 * d.l0, || format!("length not reduced enough: {detail}"))?;
    ensure(acc >= d.a0 - 0.02, || format!("accuracy dropped: {detail}"))?;
    ensure(d.elapsed <= Duration::from_secs(15 * 60), || format!("over budget: {detail}"))?;
    Ok(detail)
}

fn lambda_trend(d: &Desk) -> Verdict {
    let len = |l: f64| d.by_lambda.iter().find(|x| x.0 == l).unwrap().2;
    let detail = format!("mean length λ=0 {:.2}, λ=2 {:.2}, λ=5 {:.2}", len(0.0), len(2.0), len(5.0));
    ensure(len(5.0) >= len(0.0), || detail.clone())?;
    Ok(detail)
}

// 7 -------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let code = lenharm::cli::run(std::iter::once("lenharm").chain(args.iter().copied()));
    ensure(code == 0, || format!("`{}` exited with {code}", args.join(" ")))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn disharmony() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (sets, per_problem, distribution) = disharmony_fixture();
    let path = tmp.path().join("fixture.jsonl");
    lenharm::corpus::save_samples(&path, &sets).map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    cli(&["analyze", "--samples", s(&path), "--out", s(&out)])?;
    let report: DisharmonyReport =
        serde_json::from_slice(&std::fs::read(out.join("disharmony.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(report.per_problem == per_problem, || format!("per-problem rows {:?}", report.per_problem))?;
    ensure(report.distribution == distribution, || format!("distribution {:?}", report.distribution))?;
    let direct = disharmony_report(&sets, 4, BinScheme::EqualCount).map_err(|e| e.to_string())?;
    ensure(direct == report, || "library and CLI reports differ".into())?;

    run_property(1000, (solutions(4, 80), 1usize..=4), |(sols, n)| check_binning(&sols, n, BinScheme::EqualCount))?;
    run_property(1000, (solutions(4, 80), 1usize..=4), |(sols, n)| check_binning(&sols, n, BinScheme::EqualWidth))?;
    Ok("fixture rows and distribution [0.5; 4] exact; binning invariants hold on 1000 cases per scheme".into())
}

// 8 -------------------------------------------------------------------------

const TINY: &str = "embed_dim = 4\nhidden_dim = 16\ncount = 6\nmax_chain = 2\nk_samples = 4\nm_select = 2\nbatch_size = 4\nmax_len = 16\nlr = 0.05\n";

/// Enough reference training for a few correct samples, so DPO has pairs.
const REF_TRAINING: [&str; 6] = ["--set", "optimizer=adam", "--set", "epochs=300", "--set", "lr=0.02"];

/// Every command once, writing under `root`; returns the output directories.
fn pipeline(root: &Path) -> Result<Vec<&'static str>, String> {
    let cfg = root.join("run.cfg");
    std::fs::write(&cfg, TINY).map_err(|e| e.to_string())?;
    let c = s(&cfg);
    let d = |n: &str| root.join(n);
    let (probs, held) = (d("gen/problems.jsonl"), d("held/problems.jsonl"));
    let (refp, samples, lh) = (d("ref/policy.bin"), d("samples/samples.jsonl"), d("lh/policy.bin"));
    cli(&["gen", "--config", c, "--seed", "3", "--out", s(&d("gen"))])?;
    cli(&["gen", "--config", c, "--seed", "4", "--out", s(&d("held"))])?;
    cli(&[&["train", "--config", c, "--method", "sft", "--problems", s(&probs), "--out", s(&d("ref"))][..], &REF_TRAINING].concat())?;
    cli(&["presample", "--config", c, "--policy", s(&refp), "--problems", s(&probs), "--out", s(&d("samples"))])?;
    let lh_args = ["--problems", s(&probs), "--samples", s(&samples), "--policy", s(&refp)];
    cli(&[&["train", "--config", c, "--method", "lh", "--seed", "1", "--out", s(&d("lh"))][..], &lh_args].concat())?;
    cli(&[&["train", "--config", c, "--method", "dpo", "--seed", "1", "--out", s(&d("dpo"))][..], &lh_args].concat())?;
    cli(&["eval", "--config", c, "--policy", s(&lh), "--baseline", s(&refp), "--problems", s(&held), "--out", s(&d("eval"))])?;
    cli(&["analyze", "--config", c, "--samples", s(&samples), "--out", s(&d("analyze"))])?;
    cli(&[
        "ablate", "--config", c, "--param", "lambda", "--values", "0,2", "--policy", s(&refp), "--problems", s(&probs),
        "--samples", s(&samples), "--eval-problems", s(&held), "--out", s(&d("ablate")),
    ])?;
    Ok(vec!["gen", "held", "ref", "samples", "lh", "dpo", "eval", "analyze", "ablate"])
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let dirs = pipeline(a.path())?;
    pipeline(b.path())?;
    let mut files = 0;
    for dir in &dirs {
        let (ma, mb) = (RunManifest::load(&a.path().join(dir)), RunManifest::load(&b.path().join(dir)));
        let (ma, mb) = (ma.map_err(|e| e.to_string())?, mb.map_err(|e| e.to_string())?);
        let hashes = |m: &RunManifest| m.inputs.iter().map(|(k, v)| (k.clone(), v.sha256.clone())).collect::<Vec<_>>();
        ensure(
            (&ma.command, &ma.config, &ma.flags, ma.seed, &ma.outputs) == (&mb.command, &mb.config, &mb.flags, mb.seed, &mb.outputs)
                && hashes(&ma) == hashes(&mb),
            || format!("{dir}: manifests differ"),
        )?;
        for out in &ma.outputs {
            let read = |root: &Path| std::fs::read(root.join(dir).join(out)).map_err(|e| e.to_string());
            ensure(read(a.path())? == read(b.path())?, || format!("{dir}/{out} differs between identical runs"))?;
            files += 1;
        }
    }

    // presampling: a problem's samples do not depend on the other problems
    let vocab = Vocabulary::arithmetic();
    let problems = gen_problems(&vocab, &TaskConfig { count: 6, min_chain: 2, max_chain: 3, seed: 2 }).unwrap();
    let arch = ArchConfig { shape: ShapeMeta { vocab_size: 16, embed_dim: 4, hidden_dim: 8, layers: 1 }, init_scale: 0.5 };
    let policy = init_policy(&arch, 7).unwrap();
    let cfg = PresampleConfig { k: 4, sampling: SamplingConfig { max_len: 16, seed: 9, ..SamplingConfig::default() } };
    let all = presample(&policy, &vocab, &problems, &cfg).unwrap();
    let mut altered = problems[1].clone();
    altered.prompt_tokens[0] = (altered.prompt_tokens[0] + 3) % 10;
    let subset = [problems[4].clone(), altered, problems[2].clone()];
    let some = presample(&policy, &vocab, &subset, &cfg).unwrap();
    ensure(some[0] == all[4] && some[2] == all[2], || "resampling other problems changed a problem's samples".into())?;
    Ok(format!("{} commands rerun, {files} output files byte-identical; presample seed isolation holds", dirs.len()))
}

// 9 -------------------------------------------------------------------------

fn builders() -> Verdict {
    let seen = RefCell::new((0usize, 0usize, 0usize));
    run_property(1000, sample_sets(), |sets| {
        {
            let mut s = seen.borrow_mut();
            for set in &sets {
                s.0 += 1;
                s.1 += usize::from(set.samples.iter().all(|x| !x.correct));
            }
            let (_, skipped) = oracle_dpo(&sets);
            s.2 += skipped;
        }
        check_builders(&sets)
    })?;
    let (n, zero, dpo_skip) = *seen.borrow();
    ensure(zero > 0 && dpo_skip > zero, || "degenerate cases not exercised".into())?;
    Ok(format!("1000 cases ({n} sample sets, {zero} with no correct sample, {dpo_skip} yielding no DPO triple)"))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {id}. {name}: {detail}");
    };
    report(1, "AES oracle", aes_oracle());
    report(2, "gradient correctness", gradients());
    report(3, "clipped-loss identities", clipped_loss());
    report(4, "reward normalization identities", reward_identities());
    println!("    running the desk-scale protocol (pretrain, presample, 9 LH runs)...");
    match desk_run() {
        Ok(d) => {
            report(5, "desk-scale length reduction", desk_claim(&d));
            report(6, "lambda trend", lambda_trend(&d));
        }
        Err(e) => {
            report(5, "desk-scale length reduction", Err(e.clone()));
            report(6, "lambda trend", Err(e));
        }
    }
    report(7, "disharmony oracle and binning", disharmony());
    report(8, "determinism", determinism());
    report(9, "baseline builders", builders());
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
