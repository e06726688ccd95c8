//! Sweep result rows and their CSV / JSON files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use qkernel_core::kernels::Shots;
use qkernel_core::CheckStatus;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::Format;
use crate::real::{format_real, parse_real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Quantum,
    Rbf,
}

/// One sweep coordinate. Quantum-only and RBF-only columns are empty on the
/// other kind. A failed stage leaves its outputs empty and sets `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub kind: RecordKind,
    pub seed: u64,
    pub n: usize,
    pub n_test: usize,
    pub num_qubits: usize,
    pub m: Option<Shots>,
    #[serde(with = "crate::real::opt")]
    pub p_tilde: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub p: Option<f64>,
    pub method: Option<String>,
    #[serde(with = "crate::real::opt")]
    pub train_accuracy: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub test_accuracy: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub c1: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub geometric_difference: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub dist_before: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub dist_after: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub min_eig_before: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub min_eig_after: Option<f64>,
    pub passed_lemma: Option<CheckStatus>,
    #[serde(with = "crate::real::opt")]
    pub c_q: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub c2: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub term_ideal: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub term_noise: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub breakdown_p: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub s2: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub s_f: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub sqrt_root_n_eps: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub rbf_gamma: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub rbf_lambda: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub rbf_validation_accuracy: Option<f64>,
    pub wall_time_ms: u64,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn empty(kind: RecordKind, seed: u64, n: usize, n_test: usize, num_qubits: usize) -> Self {
        ResultRecord {
            kind,
            seed,
            n,
            n_test,
            num_qubits,
            m: None,
            p_tilde: None,
            p: None,
            method: None,
            train_accuracy: None,
            test_accuracy: None,
            c1: None,
            geometric_difference: None,
            dist_before: None,
            dist_after: None,
            min_eig_before: None,
            min_eig_after: None,
            passed_lemma: None,
            c_q: None,
            c2: None,
            term_ideal: None,
            term_noise: None,
            breakdown_p: None,
            s2: None,
            s_f: None,
            sqrt_root_n_eps: None,
            rbf_gamma: None,
            rbf_lambda: None,
            rbf_validation_accuracy: None,
            wall_time_ms: 0,
            error: None,
        }
    }
}

/// Column order of the CSV output: the field order of [`ResultRecord`].
pub fn csv_header() -> Vec<String> {
    let probe = ResultRecord::empty(RecordKind::Quantum, 0, 0, 0, 0);
    match serde_json::to_value(probe) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("records serialize to JSON objects"),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(num) if num.is_f64() => format_real(num.as_f64().unwrap_or(f64::NAN)),
        Value::Number(num) => num.to_string(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn uncell(s: &str) -> Value {
    if s.is_empty() {
        return Value::Null;
    }
    if let Ok(u) = s.parse::<u64>() {
        return Value::from(u);
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    if s.contains(['e', '.']) {
        if let Some(f) = parse_real(s).filter(|f| f.is_finite()) {
            return Value::from(f);
        }
    }
    Value::from(s)
}

pub fn to_csv(records: &[ResultRecord]) -> Result<String> {
    let header = csv_header();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in records {
        let Value::Object(map) = serde_json::to_value(r)? else {
            bail!("record did not serialize to an object");
        };
        w.write_record(header.iter().map(|k| cell(&map[k])))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        bail!("unexpected CSV header");
    }
    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let map: Map<String, Value> = header.iter().cloned().zip(row.iter().map(uncell)).collect();
        let rec = serde_json::from_value(Value::Object(map))
            .with_context(|| format!("line {}", idx + 2))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn to_json(records: &[ResultRecord]) -> Result<String> {
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// Writes `records`, replacing any existing file.
pub fn emit_results(records: &[ResultRecord], path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(records)?,
        Format::Json => to_json(records)?,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing results to {}", path.display()))
}

pub fn load_results(path: &Path, format: Format) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match format {
        Format::Csv => from_csv(&text),
        Format::Json => from_json(&text),
    }
    .with_context(|| format!("parsing {}", path.display()))
}

/// Format implied by a file extension, if any.
pub fn format_for(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "csv" => Some(Format::Csv),
        "json" => Some(Format::Json),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ResultRecord> {
        let mut q = ResultRecord::empty(RecordKind::Quantum, 3, 50, 100, 2);
        q.m = Some(Shots::Infinite);
        q.p_tilde = Some(0.05);
        q.method = Some("nearest".into());
        q.test_accuracy = Some(0.87);
        q.term_noise = Some(f64::INFINITY);
        q.c1 = Some(1.0 / 3.0);
        q.passed_lemma = Some(CheckStatus::NotApplicable);
        let mut r = ResultRecord::empty(RecordKind::Rbf, 3, 50, 100, 2);
        r.m = Some(Shots::Finite(10));
        r.rbf_gamma = Some(0.125);
        r.error = Some("matrix is singular, 1e-3".into());
        vec![q, r]
    }

    #[test]
    fn empty_list_gives_header_only_csv() {
        let text = to_csv(&[]).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("kind,seed,n,n_test,num_qubits,m,p_tilde"));
    }

    #[test]
    fn json_round_trip() {
        let recs = sample();
        assert_eq!(from_json(&to_json(&recs).unwrap()).unwrap(), recs);
    }

    #[test]
    fn csv_round_trip() {
        let recs = sample();
        assert_eq!(from_csv(&to_csv(&recs).unwrap()).unwrap(), recs);
    }

    #[test]
    fn emit_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_results(&sample(), &path, Format::Csv).unwrap();
        let first = std::fs::read(&path).unwrap();
        emit_results(&sample(), &path, Format::Csv).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert_eq!(load_results(&path, Format::Csv).unwrap(), sample());
    }
}
