//! Command-line pipeline: `gen`, `presample`, `train`, `eval`, `analyze`
//! and `ablate`.
//!
//! Each command writes into its `--out` directory together with a single
//! `manifest.json`. Exit codes: 0 success, 1 usage/validation/input errors,
//! 2 runtime failures (I/O, numerics, malformed files).

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::index;

pub use config::{parse_config, validate_config, RawConfig, RunConfig};
pub use manifest::{sha256_file, InputRecord, RunManifest, MANIFEST_NAME};

use crate::corpus::{
    filter_by_min_acc, gen_problems, load_problems, load_samples, partition_by_difficulty, save_problems, save_samples,
    Problem, SampleSet,
};
use crate::error::{Error, Result};
use crate::eval::{disharmony_report, evaluate, render_reports, reports_csv, EvalReport, CSV_HEADER};
use crate::experiment::mixed_style_pairs;
use crate::policy::{checkpoint, init_policy, Vocabulary};
use crate::trainer::{
    build_dpo_pairs, build_sft_dataset, metrics_csv, presample, train_dpo, train_lh, train_sft, Checkpoint, Method,
    PresampleConfig,
};

#[derive(Parser, Debug)]
#[command(name = "lenharm", version, about = "Length-harmonizing fine-tuning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable. Takes precedence over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a directory that already holds a manifest.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a problem set.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Draw K reference samples per problem.
    Presample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        problems: PathBuf,
    },
    /// Fine-tune a policy (lh, sft or dpo). SFT without --samples trains on
    /// both solution styles of every problem, which is how references are made.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Starting policy; also the frozen reference for lh and dpo.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Accuracy, length and AES of a policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        problems: PathBuf,
        /// Policy to compute AES against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        name: String,
        #[arg(long, default_value = "arith")]
        dataset: String,
    },
    /// Accuracy by solution-length interval.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
        /// Keep problems whose reference accuracy is at least this.
        #[arg(long)]
        min_acc: Option<f64>,
        /// Analyze a seeded random subset of this many problems.
        #[arg(long = "problems")]
        n_problems: Option<usize>,
        /// Use only the first K samples (by sample index) of each problem.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        equal_width: bool,
    },
    /// LH train + eval for each value of one parameter.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// A numeric config key such as `lambda`, or `tier`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Number of difficulty tiers when `--param tier`.
        #[arg(long, default_value_t = 4)]
        tiers: usize,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        eval_problems: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Validation(_) => 1,
        Error::Numeric(_) | Error::Schema { .. } | Error::Io { .. } | Error::Json(_) => 2,
    }
}

/// Runs one command line (including the program name) and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Effective config: defaults < file < `--set` < dedicated flags.
fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut raw = match &common.config {
        Some(p) => parse_config(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => RawConfig::new(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(vec![format!("--set expects KEY=VALUE, got {kv:?}")]))?;
        raw.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(s) = common.seed {
        raw.insert("seed".into(), s.to_string());
    }
    for (k, v) in flags {
        if let Some(v) = v {
            raw.insert(k.to_string(), v.clone());
        }
    }
    validate_config(&raw).map_err(Error::Validation)
}

/// Refuses to reuse a directory that already has a manifest unless forced,
/// and refuses outputs that would overwrite an input.
fn prepare_out(common: &Common, inputs: &[&Path], outputs: &[&str]) -> Result<()> {
    if common.out.join(MANIFEST_NAME).exists() && !common.force {
        return Err(Error::Validation(vec![format!(
            "{} already holds a manifest; pass --force to overwrite",
            common.out.display()
        )]));
    }
    for input in inputs {
        let Ok(inp) = input.canonicalize() else { continue };
        for name in outputs.iter().copied().chain([MANIFEST_NAME]) {
            if common.out.join(name).canonicalize().is_ok_and(|o| o == inp) {
                return Err(Error::Validation(vec![format!("output {name} would overwrite input {}", input.display())]));
            }
        }
    }
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))
}

fn finish(common: &Common, mut manifest: RunManifest, outputs: &[&str]) -> Result<()> {
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    manifest.save(&common.out)
}

fn manifest_for(command: &str, cfg: &RunConfig, inputs: &[(&str, &Path)]) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, cfg.train.seed, cfg.to_raw());
    for (role, path) in inputs {
        m.add_input(role, path)?;
    }
    Ok(m)
}

fn dispatch(cmd: Command) -> Result<()> {
    let vocab = Vocabulary::arithmetic();
    match cmd {
        Command::Gen { common, count } => {
            let cfg = load_config(&common, &[("count", count.map(|c| c.to_string()))])?;
            let outs = ["problems.jsonl"];
            prepare_out(&common, &[], &outs)?;
            let problems = gen_problems(&vocab, &cfg.task())?;
            save_problems(&common.out.join(outs[0]), &vocab, &problems)?;
            finish(&common, manifest_for("gen", &cfg, &[])?, &outs)
        }
        Command::Presample { common, policy, problems } => {
            let cfg = load_config(&common, &[])?;
            let outs = ["samples.jsonl"];
            prepare_out(&common, &[&policy, &problems], &outs)?;
            let manifest = manifest_for("presample", &cfg, &[("policy", &policy), ("problems", &problems)])?;
            let reference = checkpoint::load(&policy, &vocab)?;
            let probs = load_problems(&problems, &vocab)?;
            let pc = PresampleConfig { k: cfg.train.k_samples, sampling: cfg.sampling_with_seed(cfg.train.seed) };
            let sets = presample(&reference, &vocab, &probs, &pc)?;
            save_samples(&common.out.join(outs[0]), &sets)?;
            finish(&common, manifest, &outs)
        }
        Command::Train { common, method, lambda, problems, samples, policy } => {
            let cfg = load_config(&common, &[("method", method), ("lambda", lambda.map(|l| l.to_string()))])?;
            cmd_train(&vocab, &common, &cfg, &problems, samples.as_deref(), policy.as_deref())
        }
        Command::Eval { common, policy, problems, baseline, name, dataset } => {
            let cfg = load_config(&common, &[])?;
            let outs = ["reports.csv", "reports.json"];
            let mut inputs = vec![("policy", policy.as_path()), ("problems", problems.as_path())];
            if let Some(b) = &baseline {
                inputs.push(("baseline", b.as_path()));
            }
            prepare_out(&common, &inputs.iter().map(|(_, p)| *p).collect::<Vec<_>>(), &outs)?;
            let mut manifest = manifest_for("eval", &cfg, &inputs)?;
            manifest.flags.insert("name".into(), name.clone());
            manifest.flags.insert("dataset".into(), dataset.clone());
            let probs = load_problems(&problems, &vocab)?;
            let sampling = cfg.sampling_with_seed(cfg.eval_seed);
            let model = checkpoint::load(&policy, &vocab)?;
            let mut report = evaluate(&model, &vocab, &probs, &sampling, &name, &dataset)?;
            let mut reports = Vec::new();
            if let Some(b) = &baseline {
                let base = evaluate(&checkpoint::load(b, &vocab)?, &vocab, &probs, &sampling, "baseline", &dataset)?;
                report = report.with_baseline(&base, cfg.aes)?;
                reports.push(base);
            }
            reports.push(report);
            render_reports(&common.out, &reports, None)?;
            finish(&common, manifest, &outs)
        }
        Command::Analyze { common, samples, min_acc, n_problems, k, equal_width } => {
            let mut flags = vec![];
            if equal_width {
                flags.push(("bin_scheme", Some("equal_width".to_string())));
            }
            let cfg = load_config(&common, &flags)?;
            let outs = ["disharmony.json", "distribution.csv"];
            prepare_out(&common, &[&samples], &outs)?;
            let mut manifest = manifest_for("analyze", &cfg, &[("samples", &samples)])?;
            for (key, v) in [("min_acc", min_acc.map(|x| x.to_string())), ("problems", n_problems.map(|x| x.to_string())), ("k", k.map(|x| x.to_string()))] {
                if let Some(v) = v {
                    manifest.flags.insert(key.into(), v);
                }
            }
            let sets = select_for_analysis(load_samples(&samples)?, &cfg, min_acc, n_problems, k)?;
            let report = disharmony_report(&sets, cfg.n_intervals, cfg.bin_scheme)?;
            crate::io::write_atomic(&common.out.join(outs[0]), &serde_json::to_vec_pretty(&report)?)?;
            let mut csv = String::from("interval,mean_accuracy\n");
            for (i, a) in report.distribution.iter().enumerate() {
                csv.push_str(&format!("{i},{a}\n"));
            }
            crate::io::write_atomic(&common.out.join(outs[1]), csv.as_bytes())?;
            finish(&common, manifest, &outs)
        }
        Command::Ablate { common, param, values, tiers, policy, problems, samples, eval_problems } => {
            cmd_ablate(&vocab, &common, &param, &values, tiers, &policy, &problems, &samples, &eval_problems)
        }
    }
}

fn select_for_analysis(
    mut sets: Vec<SampleSet>,
    cfg: &RunConfig,
    min_acc: Option<f64>,
    n_problems: Option<usize>,
    k: Option<usize>,
) -> Result<Vec<SampleSet>> {
    if let Some(m) = min_acc {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Validation(vec![format!("--min-acc must be in [0, 1], got {m}")]));
        }
        sets = filter_by_min_acc(&sets, m);
    }
    if let Some(n) = n_problems {
        if n == 0 || n > sets.len() {
            return Err(Error::Input(format!("--problems {n} but {} problems are available", sets.len())));
        }
        let mut rng = crate::seed::rng(cfg.train.seed, &["analyze"]);
        let mut keep = index::sample(&mut rng, sets.len(), n).into_vec();
        keep.sort_unstable();
        sets = keep.into_iter().map(|i| sets[i].clone()).collect();
    }
    if let Some(k) = k {
        sets = sets
            .into_iter()
            .map(|s| {
                if k == 0 || k > s.k() {
                    return Err(Error::Input(format!("--k {k} but problem {} has {} samples", s.problem_id, s.k())));
                }
                let mut samples = s.samples;
                samples.sort_by_key(|c| c.sample_index);
                samples.truncate(k);
                SampleSet::from_samples(s.problem_id, samples)
            })
            .collect::<Result<_>>()?;
    }
    if sets.is_empty() {
        return Err(Error::Input("no problems left to analyze".into()));
    }
    Ok(sets)
}

fn cmd_train(
    vocab: &Vocabulary,
    common: &Common,
    cfg: &RunConfig,
    problems: &Path,
    samples: Option<&Path>,
    policy: Option<&Path>,
) -> Result<()> {
    let outs = ["policy.bin", "checkpoint.json", "metrics.csv"];
    let mut inputs: Vec<(&str, &Path)> = vec![("problems", problems)];
    inputs.extend(samples.map(|p| ("samples", p)));
    inputs.extend(policy.map(|p| ("policy", p)));
    prepare_out(common, &inputs.iter().map(|(_, p)| *p).collect::<Vec<_>>(), &outs)?;
    let manifest = manifest_for("train", cfg, &inputs)?;

    let probs = load_problems(problems, vocab)?;
    let sets = samples.map(load_samples).transpose()?;
    let start = match policy {
        Some(p) => checkpoint::load(p, vocab)?,
        None => init_policy(&cfg.arch, cfg.train.seed)?,
    };
    let method = cfg.train.method;
    let need = |what: Option<()>, flag: &str| {
        what.ok_or_else(|| Error::Validation(vec![format!("--method {method} requires --{flag}")]))
    };
    let ckpt: Checkpoint = match method {
        Method::Sft => {
            let pairs = match &sets {
                Some(s) => build_sft_dataset(s).pairs,
                None => mixed_style_pairs(vocab, &probs)?,
            };
            train_sft(vocab, start, &probs, &pairs, &cfg.train)?
        }
        Method::Dpo => {
            need(policy.map(|_| ()), "policy")?;
            need(sets.as_ref().map(|_| ()), "samples")?;
            let (triples, _) = build_dpo_pairs(sets.as_deref().unwrap_or_default());
            train_dpo(vocab, start, &probs, &triples, &cfg.train)?
        }
        Method::Lh => {
            need(policy.map(|_| ()), "policy")?;
            need(sets.as_ref().map(|_| ()), "samples")?;
            train_lh(vocab, start, &probs, sets.as_deref().unwrap_or_default(), &cfg.train)?.checkpoint
        }
    };
    write_training_outputs(vocab, &common.out, &ckpt)?;
    finish(common, manifest, &outs)
}

fn write_training_outputs(vocab: &Vocabulary, dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    checkpoint::save(&dir.join("policy.bin"), &ckpt.params, vocab)?;
    ckpt.save(&dir.join("checkpoint.json"))?;
    crate::io::write_atomic(&dir.join("metrics.csv"), metrics_csv(&ckpt.metrics_log).as_bytes())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    vocab: &Vocabulary,
    common: &Common,
    param: &str,
    values: &str,
    tiers: usize,
    policy: &Path,
    problems: &Path,
    samples: &Path,
    eval_problems: &Path,
) -> Result<()> {
    let base = load_config(common, &[("method", Some("lh".into()))])?;
    let mut points: Vec<(f64, String)> = Vec::new();
    for v in values.split(',').map(str::trim) {
        let x: f64 = v.parse().map_err(|_| Error::Validation(vec![format!("--values: cannot parse {v:?}")]))?;
        points.push((x, v.to_string()));
    }
    if points.is_empty() {
        return Err(Error::Validation(vec!["--values is empty".into()]));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Validate every point before any training starts.
    let mut runs: Vec<(f64, String, RunConfig)> = Vec::new();
    let mut errs = Vec::new();
    for (x, v) in &points {
        if param == "tier" {
            if x.fract() != 0.0 || *x < 0.0 || *x >= tiers as f64 {
                errs.push(format!("tier {v} outside 0..{tiers}"));
            }
            runs.push((*x, v.clone(), base.clone()));
            continue;
        }
        let mut raw = base.to_raw();
        if !raw.contains_key(param) {
            errs.push(format!("--param {param:?} is not a config key"));
            break;
        }
        raw.insert(param.to_string(), v.clone());
        match validate_config(&raw) {
            Ok(c) => runs.push((*x, v.clone(), c)),
            Err(e) => errs.extend(e.into_iter().map(|m| format!("{param}={v}: {m}"))),
        }
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    let metric_names: Vec<String> = runs.iter().map(|(_, v, _)| format!("metrics-{param}-{v}.csv")).collect();
    let mut outs: Vec<&str> = vec!["ablation.csv", "reports.json"];
    outs.extend(metric_names.iter().map(String::as_str));
    prepare_out(common, &[policy, problems, samples, eval_problems], &outs)?;
    let mut manifest = manifest_for(
        "ablate",
        &base,
        &[("policy", policy), ("problems", problems), ("samples", samples), ("eval_problems", eval_problems)],
    )?;
    manifest.flags.insert("param".into(), param.to_string());
    manifest.flags.insert("values".into(), points.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join(","));
    if param == "tier" {
        manifest.flags.insert("tiers".into(), tiers.to_string());
    }

    let reference = checkpoint::load(policy, vocab)?;
    let train_probs = load_problems(problems, vocab)?;
    let eval_probs: Vec<Problem> = load_problems(eval_problems, vocab)?;
    let sets = load_samples(samples)?;
    let sampling = base.sampling_with_seed(base.eval_seed);
    let baseline = evaluate(&reference, vocab, &eval_probs, &sampling, "reference", "arith")?;
    let tier_sets = if param == "tier" { Some(partition_by_difficulty(&sets, tiers)?) } else { None };

    let mut reports: Vec<EvalReport> = Vec::new();
    let mut table = format!("{param},{CSV_HEADER}\n");
    for ((x, v, cfg), metrics_name) in runs.iter().zip(&metric_names) {
        let subset: Vec<SampleSet> = match &tier_sets {
            Some(t) => {
                let ids = &t[*x as usize].problem_ids;
                sets.iter().filter(|s| ids.contains(&s.problem_id)).cloned().collect()
            }
            None => sets.clone(),
        };
        let out = train_lh(vocab, reference.clone(), &train_probs, &subset, &cfg.train)?;
        crate::io::write_atomic(&common.out.join(metrics_name), metrics_csv(&out.checkpoint.metrics_log).as_bytes())?;
        let report = evaluate(&out.checkpoint.params, vocab, &eval_probs, &sampling, &format!("lh-{param}-{v}"), "arith")?
            .with_baseline(&baseline, cfg.aes)?;
        let row = reports_csv(std::slice::from_ref(&report))?;
        table.push_str(&format!("{x},{}", row.lines().nth(1).unwrap_or_default()));
        table.push('\n');
        reports.push(report);
    }
    crate::io::write_atomic(&common.out.join("ablation.csv"), table.as_bytes())?;
    let bundle = BTreeMap::from([("baseline", vec![baseline]), ("runs", reports)]);
    crate::io::write_atomic(&common.out.join("reports.json"), &serde_json::to_vec_pretty(&bundle)?)?;
    finish(common, manifest, &outs)
}
