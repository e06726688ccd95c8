//! Labelled data: CSV text, PCA, synthetic draws, splits and label
//! engineering for kernel advantage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::check::{CheckReport, CheckStatus};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, eig_sym, inv_ridge, inv_ridge_from, mat_sqrt_psd, Matrix, SymMatrix};
use crate::rng::{keyed_stream, uniform, StreamRole};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    /// Each entry is `+1.0` or `-1.0`.
    pub labels: Vec<f64>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(invalid("labels must be +1 or -1"));
        }
        Ok(Dataset {
            features,
            labels,
            split: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows `idx` as a new unsplit dataset.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            split: None,
        }
    }

    /// Training and test parts of a split dataset.
    pub fn parts(&self) -> Result<(Dataset, Dataset)> {
        let s = self.split.as_ref().ok_or_else(|| invalid("dataset has no split"))?;
        Ok((self.subset(&s.train), self.subset(&s.test)))
    }

    /// Parses `f0,…,f{d−1},label` text. Labels `0`/`1` map to `−1`/`+1`.
    /// Errors name the offending line (1-based, header is line 1).
    pub fn from_csv_str(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| invalid("CSV input is empty"))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.len() < 2 || columns.last() != Some(&"label") {
            return Err(invalid("line 1: header must be f0,...,f{d-1},label"));
        }
        for (k, c) in columns[..columns.len() - 1].iter().enumerate() {
            if *c != format!("f{k}") {
                return Err(invalid(format!("line 1: expected column f{k}, found {c:?}")));
            }
        }
        let d = columns.len() - 1;
        let mut data = Vec::new();
        let mut raw_labels = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(invalid(format!(
                    "line {lineno}: expected {} fields, found {}",
                    d + 1,
                    fields.len()
                )));
            }
            for f in &fields[..d] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| invalid(format!("line {lineno}: cannot parse {f:?} as a number")))?;
                if !v.is_finite() {
                    return Err(invalid(format!("line {lineno}: non-finite feature {f:?}")));
                }
                data.push(v);
            }
            let label: f64 = fields[d]
                .parse()
                .map_err(|_| invalid(format!("line {lineno}: cannot parse label {:?}", fields[d])))?;
            raw_labels.push((lineno, label));
        }
        if raw_labels.is_empty() {
            return Err(invalid("CSV input has no data rows"));
        }
        let zero_one = raw_labels.iter().all(|&(_, l)| l == 0.0 || l == 1.0);
        let labels = raw_labels
            .iter()
            .map(|&(lineno, l)| match l {
                _ if zero_one => Ok(if l == 1.0 { 1.0 } else { -1.0 }),
                _ if l == 1.0 || l == -1.0 => Ok(l),
                _ => Err(invalid(format!("line {lineno}: unknown label value {l}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Dataset::new(Matrix::new(labels.len(), d, data)?, labels)
    }

    /// CSV text readable by [`Dataset::from_csv_str`]; features are written
    /// with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim() {
            let _ = write!(out, "f{k},");
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for v in self.features.row(i) {
                let _ = write!(out, "{v:.16e},");
            }
            let _ = writeln!(out, "{}", self.labels[i] as i64);
        }
        out
    }
}

/// Principal-component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d × N`, orthonormal columns in descending variance order.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    /// Centered data projected on the components, `n × N`.
    pub scores: Matrix,
}

impl Pca {
    /// Projects new rows with the fitted mean and components.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) - self.mean[j]);
        centered.matmul(&self.components)
    }
}

/// Projects centered features onto the top `target_dim` eigenvectors of the
/// sample covariance (divisor `n − 1`).
pub fn pca(features: &Matrix, target_dim: usize) -> Result<Pca> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(invalid("PCA needs at least two rows"));
    }
    if target_dim == 0 || target_dim > n.min(d) {
        return Err(invalid(format!(
            "target dimension {target_dim} must lie in 1..={}",
            n.min(d)
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| features.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let centered = Matrix::from_fn(n, d, |i, j| features.get(i, j) - mean[j]);
    let cols: Vec<Vec<f64>> = (0..d).map(|j| centered.column(j)).collect();
    let cov = SymMatrix::from_fn(d, |a, b| dot(&cols[a], &cols[b]) / (n - 1) as f64);
    let eig = eig_sym(&cov)?;
    let top = eig.max_eigenvalue().max(0.0);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-12 * top.max(f64::MIN_POSITIVE))
        .count();
    if target_dim > rank {
        return Err(Error::RankDeficient {
            requested: target_dim,
            rank,
        });
    }
    let components = Matrix::from_fn(d, target_dim, |i, k| eig.eigenvectors.get(i, k));
    let scores = centered.matmul(&components)?;
    Ok(Pca {
        mean,
        explained_variance: eig.eigenvalues[..target_dim].to_vec(),
        components,
        scores,
    })
}

/// `n` points uniform in `[−1, 1]^d`, all labelled `+1`.
pub fn generate_synthetic(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || d < 1 {
        return Err(invalid("synthetic data needs n >= 2 and d >= 1"));
    }
    let mut rng = keyed_stream(seed, StreamRole::Synthetic, n as u64, d as u64);
    let features = Matrix::from_fn(n, d, |_, _| uniform(&mut rng, -1.0, 1.0));
    Dataset::new(features, alloc::vec![1.0; n])
}

/// Seeded train/test split. The first `n_test` entries of a seeded
/// permutation form the test set and the next `n_train` the training set,
/// so for a fixed seed larger training sets contain smaller ones.
pub fn split(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    let n = ds.len();
    if n_train + n_test > n {
        return Err(invalid(format!(
            "split needs {} rows but the dataset has {n}",
            n_train + n_test
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut keyed_stream(seed, StreamRole::Split, n as u64, 0));
    let mut out = ds.clone();
    out.split = Some(Split {
        test: perm[..n_test].to_vec(),
        train: perm[n_test..n_test + n_train].to_vec(),
    });
    Ok(out)
}

/// Median, averaging the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("median of an empty vector is undefined"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}

/// `+1` above the median, `−1` otherwise.
///
/// Exact ties at the median are resolved by position so the output is
/// always balanced: the `⌊n/2⌋` largest values (earlier index first on
/// ties) get `+1`.
pub fn median_threshold(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid("cannot threshold an empty vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("cannot threshold non-finite values"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut labels = alloc::vec![-1.0; values.len()];
    for &i in &order[..values.len() / 2] {
        labels[i] = 1.0;
    }
    Ok(labels)
}

/// Which matrix the relabeling eigenvector is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelForm {
    /// `√Q·(K + rI)⁻¹·√Q`, whose top eigenvector maximizes the ratio
    /// `(YᵀK⁻¹Y)/(YᵀQ⁻¹Y)` over continuous `Y`.
    #[default]
    InverseClassical,
    /// `√Q·K·√Q`.
    LiteralClassical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabeling {
    pub labels: Vec<f64>,
    /// Continuous scores `√Q·v` before thresholding.
    pub scores: Vec<f64>,
    /// Top eigenvalue of the relabeling matrix.
    pub top_eigenvalue: f64,
}

/// Labels for which the quantum kernel `q` is favoured over the classical
/// kernel `k`: the median split of `√Q·v`, with `v` the top eigenvector of
/// the matrix selected by `form`.
pub fn relabel_for_advantage(
    q: &SymMatrix,
    k: &SymMatrix,
    ridge: f64,
    form: RelabelForm,
) -> Result<Relabeling> {
    if q.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: k.dim(),
        });
    }
    let sqrt_q = mat_sqrt_psd(q)?;
    let middle = match form {
        RelabelForm::InverseClassical => inv_ridge(k, ridge)?,
        RelabelForm::LiteralClassical => k.clone(),
    };
    let sq = sqrt_q.to_matrix();
    let m = sq.matmul(&middle.to_matrix())?.matmul(&sq)?;
    let m = SymMatrix::from_fn(q.dim(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let eig = eig_sym(&m)?;
    let scores = sqrt_q.mul_vec(&eig.eigenvector(0))?;
    Ok(Relabeling {
        labels: median_threshold(&scores)?,
        scores,
        top_eigenvalue: eig.max_eigenvalue(),
    })
}

/// `(Yᵀ(K + rI)⁻¹Y)/(YᵀQ⁻¹Y)` with an unregularized `Q`.
fn advantage_ratio(k_inv: &SymMatrix, q_inv: &SymMatrix, y: &[f64]) -> Result<f64> {
    Ok(k_inv.quadratic_form(y)? / q_inv.quadratic_form(y)?)
}

/// Compares the relabeling scores against `directions` random unit vectors
/// `Y = √Q·u` under the ratio `(Yᵀ(K + rI)⁻¹Y)/(YᵀQ⁻¹Y)`.
///
/// `lhs` is the best random ratio, `rhs` the ratio of the scores plus 1e−9.
/// Requires `q` positive definite.
pub fn check_relabel_optimality(
    q: &SymMatrix,
    k: &SymMatrix,
    ridge: f64,
    directions: usize,
    seed: u64,
) -> Result<CheckReport> {
    let relabel = relabel_for_advantage(q, k, ridge, RelabelForm::InverseClassical)?;
    let (q_inv, q_min) = inv_ridge_from(&eig_sym(q)?, 0.0)?;
    if q_min <= 1e-10 {
        return Err(Error::Singular {
            min_eigenvalue: q_min,
        });
    }
    let k_inv = inv_ridge(k, ridge)?;
    let sqrt_q = mat_sqrt_psd(q)?;
    let attained = advantage_ratio(&k_inv, &q_inv, &relabel.scores)?;
    let mut rng = keyed_stream(seed, StreamRole::Synthetic, directions as u64, q.dim() as u64);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..directions {
        let u: Vec<f64> = (0..q.dim()).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let y = sqrt_q.mul_vec(&u)?;
        best = best.max(advantage_ratio(&k_inv, &q_inv, &y)?);
    }
    let rhs = attained + 1e-9;
    Ok(CheckReport {
        lhs: best,
        rhs,
        status: CheckStatus::from_bool(best <= rhs),
    })
}
