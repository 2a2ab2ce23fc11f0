//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Every key is optional and falls back to its default. Unknown keys and
//! unparsable values are violations, reported together with range checks.

use std::collections::BTreeMap;

use crate::corpus::TaskConfig;
use crate::error::{Error, Result};
use crate::eval::{AesWeights, BinScheme};
use crate::policy::{ArchConfig, SamplingConfig, ShapeMeta};
use crate::trainer::{Method, OptimizerKind, TrainConfig};

pub type RawConfig = BTreeMap<String, String>;

/// Effective configuration of any command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `seed` also drives problem generation, initialization and presampling.
    pub train: TrainConfig,
    /// `max_len` mirrors `train.max_len`; `seed` is unused (see the seed keys).
    pub sampling: SamplingConfig,
    pub eval_seed: u64,
    pub arch: ArchConfig,
    pub count: usize,
    pub min_chain: usize,
    pub max_chain: usize,
    pub aes: AesWeights,
    pub n_intervals: usize,
    pub bin_scheme: BinScheme,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            sampling: SamplingConfig { max_len: train.max_len, ..SamplingConfig::default() },
            train,
            eval_seed: 0,
            arch: ArchConfig::default(),
            count: 200,
            min_chain: 2,
            max_chain: 4,
            aes: AesWeights::default(),
            n_intervals: 4,
            bin_scheme: BinScheme::EqualCount,
        }
    }
}

impl RunConfig {
    pub fn task(&self) -> TaskConfig {
        TaskConfig { count: self.count, min_chain: self.min_chain, max_chain: self.max_chain, seed: self.train.seed }
    }

    /// Sampling settings with the given seed.
    pub fn sampling_with_seed(&self, seed: u64) -> SamplingConfig {
        SamplingConfig { seed, max_len: self.train.max_len, ..self.sampling }
    }

    /// Every key with its effective value, in key order.
    pub fn to_raw(&self) -> RawConfig {
        let t = &self.train;
        let s = &self.arch.shape;
        let pairs: Vec<(&str, String)> = vec![
            ("lambda", t.lambda.to_string()),
            ("clip_eps", t.clip_eps.to_string()),
            ("k_samples", t.k_samples.to_string()),
            ("m_select", t.m_select.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", t.lr.to_string()),
            ("warmup_ratio", t.warmup_ratio.to_string()),
            ("epochs", t.epochs.to_string()),
            ("max_len", t.max_len.to_string()),
            ("seed", t.seed.to_string()),
            ("method", t.method.to_string()),
            ("dpo_beta", t.dpo_beta.to_string()),
            ("optimizer", optimizer_name(t.optimizer).to_string()),
            ("normalize_rewards", t.normalize_rewards.to_string()),
            ("top_p", self.sampling.top_p.to_string()),
            ("temperature", self.sampling.temperature.to_string()),
            ("eval_seed", self.eval_seed.to_string()),
            ("embed_dim", s.embed_dim.to_string()),
            ("hidden_dim", s.hidden_dim.to_string()),
            ("layers", s.layers.to_string()),
            ("init_scale", self.arch.init_scale.to_string()),
            ("count", self.count.to_string()),
            ("min_chain", self.min_chain.to_string()),
            ("max_chain", self.max_chain.to_string()),
            ("aes_alpha", self.aes.alpha.to_string()),
            ("aes_beta", self.aes.beta.to_string()),
            ("aes_gamma", self.aes.gamma.to_string()),
            ("n_intervals", self.n_intervals.to_string()),
            ("bin_scheme", bin_scheme_name(self.bin_scheme).to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::Adam => "adam",
    }
}

fn bin_scheme_name(b: BinScheme) -> &'static str {
    match b {
        BinScheme::EqualCount => "equal_count",
        BinScheme::EqualWidth => "equal_width",
    }
}

/// Parses the text of a config file.
pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut out = RawConfig::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Validation(vec![format!("line {}: expected `key = value`", n + 1)]));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, errs: &mut Vec<String>) -> Option<T> {
    match value.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            errs.push(format!("{key}: cannot parse {value:?}"));
            None
        }
    }
}

fn set<T: std::str::FromStr>(slot: &mut T, key: &str, value: &str, errs: &mut Vec<String>) {
    if let Some(v) = parse(key, value, errs) {
        *slot = v;
    }
}

/// Applies defaults, then every raw value; returns the effective config or
/// every violation found.
pub fn validate_config(raw: &RawConfig) -> std::result::Result<RunConfig, Vec<String>> {
    let mut c = RunConfig::default();
    let mut errs = Vec::new();
    for (key, value) in raw {
        let (k, v, e) = (key.as_str(), value.as_str(), &mut errs);
        let t = &mut c.train;
        match k {
            "lambda" => set(&mut t.lambda, k, v, e),
            "clip_eps" => set(&mut t.clip_eps, k, v, e),
            "k_samples" => set(&mut t.k_samples, k, v, e),
            "m_select" => set(&mut t.m_select, k, v, e),
            "batch_size" => set(&mut t.batch_size, k, v, e),
            "lr" => set(&mut t.lr, k, v, e),
            "warmup_ratio" => set(&mut t.warmup_ratio, k, v, e),
            "epochs" => set(&mut t.epochs, k, v, e),
            "max_len" => set(&mut t.max_len, k, v, e),
            "seed" => set(&mut t.seed, k, v, e),
            "method" => match v.parse::<Method>() {
                Ok(m) => t.method = m,
                Err(msg) => e.push(format!("method: {msg}")),
            },
            "dpo_beta" => set(&mut t.dpo_beta, k, v, e),
            "optimizer" => match v.to_ascii_lowercase().as_str() {
                "sgd" => t.optimizer = OptimizerKind::Sgd,
                "adam" => t.optimizer = OptimizerKind::Adam,
                _ => e.push(format!("optimizer: expected sgd or adam, got {v:?}")),
            },
            "normalize_rewards" => set(&mut t.normalize_rewards, k, v, e),
            "top_p" => set(&mut c.sampling.top_p, k, v, e),
            "temperature" => set(&mut c.sampling.temperature, k, v, e),
            "eval_seed" => set(&mut c.eval_seed, k, v, e),
            "embed_dim" => set(&mut c.arch.shape.embed_dim, k, v, e),
            "hidden_dim" => set(&mut c.arch.shape.hidden_dim, k, v, e),
            "layers" => set(&mut c.arch.shape.layers, k, v, e),
            "init_scale" => set(&mut c.arch.init_scale, k, v, e),
            "count" => set(&mut c.count, k, v, e),
            "min_chain" => set(&mut c.min_chain, k, v, e),
            "max_chain" => set(&mut c.max_chain, k, v, e),
            "aes_alpha" => set(&mut c.aes.alpha, k, v, e),
            "aes_beta" => set(&mut c.aes.beta, k, v, e),
            "aes_gamma" => set(&mut c.aes.gamma, k, v, e),
            "n_intervals" => set(&mut c.n_intervals, k, v, e),
            "bin_scheme" => match v {
                "equal_count" => c.bin_scheme = BinScheme::EqualCount,
                "equal_width" => c.bin_scheme = BinScheme::EqualWidth,
                _ => e.push(format!("bin_scheme: expected equal_count or equal_width, got {v:?}")),
            },
            _ => e.push(format!("unknown key {k:?}")),
        }
    }
    c.sampling.max_len = c.train.max_len;

    errs.extend(c.train.violations());
    if let Err(Error::Validation(v)) = c.sampling.validate() {
        errs.extend(v.into_iter().filter(|m| !m.starts_with("max_len")));
    }
    let ShapeMeta { embed_dim, hidden_dim, layers, .. } = c.arch.shape;
    for (name, d) in [("embed_dim", embed_dim), ("hidden_dim", hidden_dim), ("layers", layers)] {
        if d == 0 {
            errs.push(format!("{name} must be >= 1"));
        }
    }
    if !(c.arch.init_scale >= 0.0 && c.arch.init_scale.is_finite()) {
        errs.push(format!("init_scale must be >= 0, got {}", c.arch.init_scale));
    }
    if c.count == 0 {
        errs.push("count must be >= 1".into());
    }
    if c.min_chain == 0 || c.min_chain > c.max_chain {
        errs.push(format!("need 1 <= min_chain ({}) <= max_chain ({})", c.min_chain, c.max_chain));
    }
    if [c.aes.alpha, c.aes.beta, c.aes.gamma].iter().any(|w| !w.is_finite()) {
        errs.push("AES weights must be finite".into());
    }
    if c.n_intervals == 0 {
        errs.push("n_intervals must be >= 1".into());
    }
    if errs.is_empty() {
        Ok(c)
    } else {
        Err(errs)
    }
}
