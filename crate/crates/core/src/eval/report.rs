//! CSV and JSON renderings of evaluation results.
//!
//! Numbers go through Rust's `Display`, which always uses `.` as the decimal
//! point and prints the shortest string that parses back to the same `f64`.

use std::path::Path;

use serde::Serialize;

use super::{DisharmonyReport, EvalReport};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,dataset,acc_pct,mean_len,aes_canonical,aes_table_variant,n";

fn check_field(name: &str) -> Result<&str> {
    if name.contains([',', '"', '\n', '\r']) {
        return Err(Error::Input(format!("name {name:?} cannot be written to CSV")));
    }
    Ok(name)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per report, in the given order.
pub fn reports_csv(reports: &[EvalReport]) -> Result<String> {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            check_field(&r.method_name)?,
            check_field(&r.dataset)?,
            r.accuracy * 100.0,
            r.mean_length,
            opt(r.aes),
            opt(r.aes_variant),
            r.n_problems
        ));
    }
    Ok(out)
}

/// A parsed CSV row: `(method, dataset, acc_pct, mean_len, aes, aes_variant, n)`.
pub type CsvRow = (String, String, f64, f64, Option<f64>, Option<f64>, usize);

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Input("report CSV header mismatch".into()));
    }
    let bad = |n: usize, what: &str| Error::Schema { path: "<csv>".into(), line: n + 2, msg: what.to_string() };
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(n, "expected 7 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
            let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                num(f[2])?,
                num(f[3])?,
                maybe(f[4])?,
                maybe(f[5])?,
                f[6].parse().map_err(|_| bad(n, "bad count"))?,
            ))
        })
        .collect()
}

#[derive(Serialize)]
struct Bundle<'a> {
    reports: &'a [EvalReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    disharmony: Option<&'a DisharmonyReport>,
}

/// Writes `reports.csv` and `reports.json` into `dir`.
pub fn render_reports(dir: &Path, reports: &[EvalReport], disharmony: Option<&DisharmonyReport>) -> Result<()> {
    let csv = reports_csv(reports)?;
    crate::io::write_atomic(&dir.join("reports.csv"), csv.as_bytes())?;
    let json = serde_json::to_vec_pretty(&Bundle { reports, disharmony })?;
    crate::io::write_atomic(&dir.join("reports.json"), &json)
}
