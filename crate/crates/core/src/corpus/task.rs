//! Seeded addition-chain problems and their two solution styles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::policy::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub count: usize,
    pub min_chain: usize,
    pub max_chain: usize,
    pub seed: u64,
}

/// `count` problems `a1+...+ak=` with single-digit operands and
/// `k ~ U[min_chain, max_chain]`.
pub fn gen_problems(vocab: &Vocabulary, cfg: &TaskConfig) -> Result<Vec<Problem>> {
    if cfg.count == 0 {
        return Err(Error::Config("count must be >= 1".into()));
    }
    if cfg.min_chain == 0 {
        return Err(Error::Config("min_chain must be >= 1".into()));
    }
    if cfg.min_chain > cfg.max_chain {
        return Err(Error::Config(format!(
            "min_chain ({}) exceeds max_chain ({})",
            cfg.min_chain, cfg.max_chain
        )));
    }
    let sym = |s: &str| vocab.id(s).ok_or_else(|| Error::Config(format!("vocabulary lacks {s:?}")));
    let (plus, eq) = (sym("+")?, sym("=")?);
    let digits: Vec<TokenId> = (0..10).map(|d| sym(&d.to_string())).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| {
            let k = rng.gen_range(cfg.min_chain..=cfg.max_chain);
            let ops: Vec<u32> = (0..k).map(|_| rng.gen_range(0..10)).collect();
            let mut prompt = Vec::with_capacity(2 * k);
            for (j, &a) in ops.iter().enumerate() {
                if j > 0 {
                    prompt.push(plus);
                }
                prompt.push(digits[a as usize]);
            }
            prompt.push(eq);
            let sum: u32 = ops.iter().sum();
            let answer = vocab.encode(&sum.to_string())?;
            let meta = BTreeMap::from([("chain".to_string(), k.to_string())]);
            Problem::new(vocab, format!("add-{}-{i:05}", cfg.seed), prompt, answer, meta)
        })
        .collect()
}

/// Operands of an addition-chain prompt, or `None` for any other prompt.
pub fn operands(vocab: &Vocabulary, problem: &Problem) -> Option<Vec<u32>> {
    let text = vocab.decode(&problem.prompt_tokens);
    let body = text.strip_suffix('=')?;
    body.split('+')
        .map(|d| if d.len() == 1 { d.parse().ok() } else { None })
        .collect()
}

/// How a reference solution is written out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionStyle {
    /// `#S</s>`
    Terse,
    /// Every partial sum spelled out: `a+b=s;s+c=t;#t</s>`.
    Verbose,
}

pub fn render_solution(vocab: &Vocabulary, problem: &Problem, style: SolutionStyle) -> Result<Vec<TokenId>> {
    let ops = operands(vocab, problem)
        .ok_or_else(|| Error::Input(format!("problem {} is not an addition chain", problem.id)))?;
    let total: u32 = ops.iter().sum();
    let mut text = String::new();
    if style == SolutionStyle::Verbose {
        if ops.len() == 1 {
            text.push_str(&format!("{0}={0};", ops[0]));
        }
        let mut acc = ops[0];
        for &a in &ops[1..] {
            text.push_str(&format!("{acc}+{a}={};", acc + a));
            acc += a;
        }
    }
    text.push_str(&format!("#{total}</s>"));
    vocab.encode(&text)
}
