//! Dense symmetric linear algebra.
//!
//! The eigensolver is Householder tridiagonalization followed by implicit QL
//! iterations with Wilkinson-style shifts. Everything downstream (inverses,
//! square roots, spectral transforms) goes through [`eig_sym`].

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::check::{CheckReport, CheckStatus};
use crate::error::{invalid, Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest singular value, via the eigenvalues of `AᵀA`.
    pub fn spectral_norm(&self) -> Result<f64> {
        let gram = SymMatrix::from_fn(self.cols, |i, j| {
            (0..self.rows).map(|k| self.get(k, i) * self.get(k, j)).sum()
        });
        let eig = eig_sym(&gram)?;
        Ok(eig.eigenvalues[0].max(0.0).sqrt())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Real symmetric matrix. Symmetry is exact: only the upper triangle is ever
/// read from caller-supplied data and it is mirrored on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Mirrors the upper triangle of a row-major `dim × dim` buffer.
    pub fn from_upper(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                data[i * dim + j] = data[j * dim + i];
            }
        }
        Ok(SymMatrix { dim, data })
    }

    /// Evaluates `f(i, j)` for `i <= j` only.
    ///
    /// Panics if `dim == 0`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim > 0, "matrix dimension must be at least 1");
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        SymMatrix { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    /// Panics on an empty slice.
    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `self + c·I`.
    pub fn add_identity(&self, c: f64) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += c;
        }
        out
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Applies `f` to every entry, keeping symmetry.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim, |i, j| f(i, j, self.get(i, j)))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok((0..self.dim).map(|i| dot(self.row(i), v)).collect())
    }

    /// `vᵀ·M·v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.mul_vec(v)?))
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// Keeps the listed rows and columns.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::NonFinite {
                row: k / self.dim,
                col: k % self.dim,
            }),
        }
    }
}

impl From<SymMatrix> for Matrix {
    fn from(m: SymMatrix) -> Matrix {
        Matrix {
            rows: m.dim,
            cols: m.dim,
            data: m.data,
        }
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    /// Requires exact symmetry; use [`SymMatrix::from_upper`] to mirror.
    fn try_from(m: Matrix) -> Result<SymMatrix> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                found: m.cols,
            });
        }
        for i in 0..m.rows {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(invalid("matrix is not symmetric"));
                }
            }
        }
        SymMatrix::from_upper(m.rows, m.data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues in descending order with eigenvectors stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }

    /// `V·diag(f(λ))·Vᵀ`.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        // Scaled copy W = V·diag(f(λ)), then W·Vᵀ on the upper triangle.
        let mut w = v.clone();
        for i in 0..n {
            for (k, &m) in mapped.iter().enumerate() {
                w.data[i * n + k] *= m;
            }
        }
        SymMatrix::from_fn(n, |i, j| dot(w.row(i), v.row(j)))
    }
}

const QL_MAX_SWEEPS: usize = 60;

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending. Each eigenvector's first component
/// that is not negligibly small is made nonnegative. The order among equal
/// eigenvalues is unspecified.
pub fn eig_sym(m: &SymMatrix) -> Result<EigenDecomposition> {
    m.check_finite()?;
    let n = m.dim();
    let mut v = m.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let norm = (0..n).map(|i| v[i * n + k] * v[i * n + k]).sum::<f64>().sqrt();
        let lead = (0..n)
            .map(|i| v[i * n + k])
            .find(|x| x.abs() > 1e-12 * norm)
            .unwrap_or(0.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vecs.set(i, col, sign * v[i * n + k]);
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vecs,
    })
}

/// Householder reduction of the symmetric matrix held in `v` to tridiagonal
/// form. On return `d` is the diagonal, `e[1..]` the subdiagonal and `v`
/// the accumulated orthogonal transform.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal `(d, e)`, rotating `v` along.
fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_SWEEPS {
                    return Err(Error::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * hk;
                        v[at(k, i)] = c * v[at(k, i)] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Principal square root of a (numerically) PSD matrix.
///
/// Eigenvalues down to `-1e-9·λ_max` are treated as zero.
pub fn mat_sqrt_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = eig_sym(m)?;
    let lmax = eig.max_eigenvalue();
    let lmin = eig.min_eigenvalue();
    if lmin < -1e-9 * lmax.max(0.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    Ok(eig.reassemble(|l| l.max(0.0).sqrt()))
}

/// `(M + ridge·I)⁻¹` through the eigenbasis of `M`.
pub fn inv_ridge(m: &SymMatrix, ridge: f64) -> Result<SymMatrix> {
    Ok(inv_ridge_from(&eig_sym(m)?, ridge)?.0)
}

/// Same as [`inv_ridge`] but reuses a decomposition. Also returns the
/// smallest shifted eigenvalue.
pub fn inv_ridge_from(eig: &EigenDecomposition, ridge: f64) -> Result<(SymMatrix, f64)> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(invalid("ridge must be a finite nonnegative number"));
    }
    let shifted_min = eig.min_eigenvalue() + ridge;
    if shifted_min <= 1e-14 {
        return Err(Error::Singular {
            min_eigenvalue: shifted_min,
        });
    }
    Ok((eig.reassemble(|l| 1.0 / (l + ridge)), shifted_min))
}

/// Inverse of a nonsingular (possibly indefinite) symmetric matrix.
pub fn inv_sym(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = eig_sym(m)?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let smallest = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if smallest <= 1e-14 * scale {
        return Err(Error::Singular {
            min_eigenvalue: smallest,
        });
    }
    Ok(eig.reassemble(|l| 1.0 / l))
}

/// `max |λ_i|`.
pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    let eig = eig_sym(m)?;
    Ok(eig.max_eigenvalue().abs().max(eig.min_eigenvalue().abs()))
}

pub fn frobenius_norm(m: &SymMatrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Checks `‖A⁻¹ − B⁻¹‖₂ ≤ ‖A⁻¹‖₂²·‖A − B‖₂ / (1 − ‖A⁻¹(A − B)‖₂)`.
///
/// Reported as not applicable when `‖A⁻¹(B − A)‖₂ ≥ 1`.
pub fn inverse_perturbation_check(a: &SymMatrix, b: &SymMatrix) -> Result<CheckReport> {
    let a_inv = inv_sym(a)?;
    let b_inv = inv_sym(b)?;
    let diff = a.sub(b)?;
    let contraction = a_inv.to_matrix().matmul(&diff.to_matrix())?.spectral_norm()?;
    let lhs = spectral_norm(&a_inv.sub(&b_inv)?)?;
    if contraction >= 1.0 {
        return Ok(CheckReport {
            lhs,
            rhs: f64::INFINITY,
            status: CheckStatus::NotApplicable,
        });
    }
    let a_inv_norm = spectral_norm(&a_inv)?;
    let rhs = a_inv_norm * a_inv_norm * spectral_norm(&diff)? / (1.0 - contraction);
    Ok(CheckReport {
        lhs,
        rhs,
        status: CheckStatus::from_bool(lhs <= rhs * (1.0 + 1e-9)),
    })
}
