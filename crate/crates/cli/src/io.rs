//! Matrix and dataset files.
//!
//! Matrices are headerless CSV with 17 significant digits per entry. Each
//! data file `X` may carry metadata in the JSON sidecar `X.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qkernel_core::datasets::Dataset;
use qkernel_core::kernels::KernelMatrix;
use qkernel_core::{Matrix, SymMatrix};
use serde_json::Value;

use crate::real::{format_real, parse_real};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_sidecar(path: &Path) -> Result<Option<Value>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = read_text(&side)?;
    let value = serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?;
    Ok(Some(value))
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| format_real(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_real(f).ok_or_else(|| anyhow!("line {}: cannot parse {f:?} as a number", idx + 1)))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("line {}: expected {} columns, found {}", idx + 1, first.len(), row.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("matrix file has no rows");
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn write_matrix(path: &Path, m: &Matrix, meta: Option<&Value>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))?;
    if let Some(meta) = meta {
        write_json(&sidecar_path(path), meta)?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    matrix_from_csv(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_sym_matrix(path: &Path) -> Result<SymMatrix> {
    let m = read_matrix(path)?;
    SymMatrix::try_from(m).with_context(|| format!("{} is not a symmetric matrix", path.display()))
}

/// Writes the Gram matrix with its provenance and parameters as sidecar.
pub fn write_kernel(path: &Path, k: &KernelMatrix) -> Result<()> {
    let meta = serde_json::json!({
        "rows": k.dim(),
        "cols": k.dim(),
        "provenance": k.provenance,
        "params": k.params,
    });
    write_matrix(path, &k.matrix.to_matrix(), Some(&meta))
}

/// Reads a Gram matrix; the sidecar is required.
pub fn read_kernel(path: &Path) -> Result<KernelMatrix> {
    let matrix = read_sym_matrix(path)?;
    let meta = read_sidecar(path)?
        .ok_or_else(|| anyhow!("{} has no sidecar {}", path.display(), sidecar_path(path).display()))?;
    let provenance = serde_json::from_value(meta["provenance"].clone())
        .with_context(|| format!("provenance in {}", sidecar_path(path).display()))?;
    let params = serde_json::from_value(meta["params"].clone())
        .with_context(|| format!("params in {}", sidecar_path(path).display()))?;
    Ok(KernelMatrix {
        matrix,
        provenance,
        params,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_csv_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_dataset(path: &Path, ds: &Dataset, meta: Option<&Value>) -> Result<()> {
    write_text(path, &ds.to_csv_string())?;
    if let Some(meta) = meta {
        write_json(&sidecar_path(path), meta)?;
    }
    Ok(())
}
