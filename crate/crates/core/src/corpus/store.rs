//! JSONL persistence for problems and sample sets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{means, CandidateSolution, Problem, SampleSet};
use crate::error::Result;
use crate::io::{read_jsonl, write_jsonl};
use crate::policy::{TokenId, Vocabulary};

/// Relative slack when re-checking stored means against their samples.
const MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemRecord {
    id: String,
    prompt: String,
    answer: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    tokens: Vec<TokenId>,
    length: usize,
    correct: bool,
    ref_logprob: f64,
    sample_index: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    truncated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSetRecord {
    problem_id: String,
    samples: Vec<SampleRecord>,
    mean_length: f64,
    mean_acc: f64,
}

pub fn save_problems(path: &Path, vocab: &Vocabulary, problems: &[Problem]) -> Result<()> {
    let records: Vec<ProblemRecord> = problems
        .iter()
        .map(|p| ProblemRecord {
            id: p.id.clone(),
            prompt: vocab.decode(&p.prompt_tokens),
            answer: vocab.decode(&p.answer),
            meta: p.meta.clone(),
        })
        .collect();
    write_jsonl(path, &records)
}

pub fn load_problems(path: &Path, vocab: &Vocabulary) -> Result<Vec<Problem>> {
    let mut problems = Vec::new();
    read_jsonl(path, |r: &ProblemRecord| {
        let prompt = vocab.encode(&r.prompt).map_err(|e| format!("prompt: {e}"))?;
        let answer = vocab.encode(&r.answer).map_err(|e| format!("answer: {e}"))?;
        let p = Problem::new(vocab, r.id.clone(), prompt, answer, r.meta.clone()).map_err(|e| e.to_string())?;
        problems.push(p);
        Ok(())
    })?;
    Ok(problems)
}

pub fn save_samples(path: &Path, sets: &[SampleSet]) -> Result<()> {
    let records: Vec<SampleSetRecord> = sets
        .iter()
        .map(|s| SampleSetRecord {
            problem_id: s.problem_id.clone(),
            samples: s
                .samples
                .iter()
                .map(|c| SampleRecord {
                    tokens: c.tokens.clone(),
                    length: c.length,
                    correct: c.correct,
                    ref_logprob: c.ref_logprob,
                    sample_index: c.sample_index,
                    truncated: c.truncated,
                })
                .collect(),
            mean_length: s.mean_length,
            mean_acc: s.mean_acc,
        })
        .collect();
    write_jsonl(path, &records)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MEAN_TOL * a.abs().max(b.abs()).max(1.0)
}

fn to_sample_set(r: &SampleSetRecord) -> std::result::Result<SampleSet, String> {
    if r.samples.is_empty() {
        return Err(format!("sample set {} has no samples", r.problem_id));
    }
    let mut samples = Vec::with_capacity(r.samples.len());
    for (i, s) in r.samples.iter().enumerate() {
        if s.length != s.tokens.len() {
            return Err(format!("sample {i}: length {} != token count {}", s.length, s.tokens.len()));
        }
        if s.length == 0 {
            return Err(format!("sample {i}: empty solution"));
        }
        if !(s.ref_logprob <= 0.0) {
            return Err(format!("sample {i}: ref_logprob {} must be <= 0", s.ref_logprob));
        }
        samples.push(CandidateSolution {
            problem_id: r.problem_id.clone(),
            tokens: s.tokens.clone(),
            length: s.length,
            correct: s.correct,
            ref_logprob: s.ref_logprob,
            sample_index: s.sample_index,
            truncated: s.truncated,
        });
    }
    let (len, acc) = means(&samples);
    if !close(len, r.mean_length) {
        return Err(format!("mean_length {} disagrees with samples ({len})", r.mean_length));
    }
    if !close(acc, r.mean_acc) {
        return Err(format!("mean_acc {} disagrees with samples ({acc})", r.mean_acc));
    }
    Ok(SampleSet { problem_id: r.problem_id.clone(), samples, mean_length: r.mean_length, mean_acc: r.mean_acc })
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleSet>> {
    let mut sets = Vec::new();
    read_jsonl(path, |r: &SampleSetRecord| {
        sets.push(to_sample_set(r)?);
        Ok(())
    })?;
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_problems, render_solution, SolutionStyle, TaskConfig};
    use crate::error::Error;

    fn corpus(v: &Vocabulary) -> Vec<Problem> {
        gen_problems(v, &TaskConfig { count: 3, min_chain: 2, max_chain: 4, seed: 5 }).unwrap()
    }

    fn sets(v: &Vocabulary, problems: &[Problem]) -> Vec<SampleSet> {
        problems
            .iter()
            .map(|p| {
                let samples = [SolutionStyle::Terse, SolutionStyle::Verbose]
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        let toks = render_solution(v, p, s).unwrap();
                        CandidateSolution::new(v, p, toks, -0.1 * (i + 1) as f64 - 1.0 / 3.0, i, false)
                    })
                    .collect();
                SampleSet::from_samples(p.id.clone(), samples).unwrap()
            })
            .collect()
    }

    #[test]
    fn problems_round_trip() {
        let v = Vocabulary::arithmetic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let ps = corpus(&v);
        save_problems(&path, &v, &ps).unwrap();
        assert_eq!(load_problems(&path, &v).unwrap(), ps);
    }

    #[test]
    fn samples_round_trip() {
        let v = Vocabulary::arithmetic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let s = sets(&v, &corpus(&v));
        save_samples(&path, &s).unwrap();
        assert_eq!(load_samples(&path).unwrap(), s);
    }

    #[test]
    fn crlf_parses_like_lf() {
        let v = Vocabulary::arithmetic();
        let dir = tempfile::tempdir().unwrap();
        let lf = dir.path().join("lf.jsonl");
        save_samples(&lf, &sets(&v, &corpus(&v))).unwrap();
        let text = std::fs::read_to_string(&lf).unwrap();
        let crlf = dir.path().join("crlf.jsonl");
        std::fs::write(&crlf, text.replace('\n', "\r\n")).unwrap();
        assert_eq!(load_samples(&lf).unwrap(), load_samples(&crlf).unwrap());

        save_problems(&lf, &v, &corpus(&v)).unwrap();
        let text = std::fs::read_to_string(&lf).unwrap();
        std::fs::write(&crlf, text.replace('\n', "\r\n")).unwrap();
        assert_eq!(load_problems(&lf, &v).unwrap(), load_problems(&crlf, &v).unwrap());
    }

    #[test]
    fn length_mismatch_names_line() {
        let v = Vocabulary::arithmetic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        save_samples(&path, &sets(&v, &corpus(&v))).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        rec["samples"][0]["length"] = serde_json::json!(99);
        lines[1] = rec.to_string();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_samples(&path) {
            Err(Error::Schema { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("length"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing_field_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"prompt\":\"1+2=\",\"answer\":\"3\"}\n{not json\n").unwrap();
        let v = Vocabulary::arithmetic();
        assert!(matches!(load_problems(&path, &v), Err(Error::Schema { line: 2, .. })));
        std::fs::write(&path, "{\"id\":\"a\",\"prompt\":\"1+2=\"}\n").unwrap();
        assert!(matches!(load_problems(&path, &v), Err(Error::Schema { line: 1, .. })));
        std::fs::write(&path, "{\"id\":\"a\",\"prompt\":7,\"answer\":\"3\"}\n").unwrap();
        assert!(matches!(load_problems(&path, &v), Err(Error::Schema { line: 1, .. })));
        assert!(matches!(load_problems(&dir.path().join("nope"), &v), Err(Error::Io { .. })));
    }
}
