//! Kernel ridge classification and the RBF baseline grid search.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{rbf_cross, rbf_gram, KernelMatrix, KernelParams};
use crate::linalg::{dot, eig_sym, inv_ridge_from, EigenDecomposition, Matrix, SymMatrix};
use crate::rng::{keyed_stream, StreamRole};
#[allow(unused_imports)]
use num_traits::Float;

/// Ridge used with quantum kernels unless configured otherwise.
pub const DEFAULT_QUANTUM_RIDGE: f64 = 1e-8;

/// Multipliers of `1/(d·Var)` tried for the RBF bandwidth.
pub const RBF_GAMMA_FACTORS: [f64; 10] = [0.25, 0.5, 1.0, 2.0, 4.0, 5.0, 10.0, 20.0, 40.0, 50.0];

/// Ridge values tried for the RBF baseline.
pub const RBF_RIDGES: [f64; 18] = [
    0.006, 0.015, 0.03, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0,
    256.0, 512.0, 1024.0,
];

/// Relative residual the dual solve must reach.
const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    /// `α` with `(K + λI)α = Y`.
    pub dual_coefficients: Vec<f64>,
    pub training_labels: Vec<f64>,
    pub ridge: f64,
    pub kernel_params: Option<KernelParams>,
    /// `‖(K + λI)α − Y‖₂ / ‖Y‖₂` achieved by the solve.
    pub relative_residual: f64,
}

fn check_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(invalid("labels must be +1 or -1"));
    }
    Ok(())
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(invalid("ridge must be a finite nonnegative number"));
    }
    Ok(())
}

/// `(K + rI)⁻¹·v` through a precomputed eigendecomposition.
fn solve_with(eig: &EigenDecomposition, v: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = eig.dim();
    let shifted_min = eig.min_eigenvalue() + ridge;
    if !(shifted_min > 1e-12) {
        return Err(Error::Singular {
            min_eigenvalue: shifted_min,
        });
    }
    let vecs = &eig.eigenvectors;
    let mut coeff = vec_zeros(n);
    for (k, c) in coeff.iter_mut().enumerate() {
        let proj: f64 = (0..n).map(|i| vecs.get(i, k) * v[i]).sum();
        *c = proj / (eig.eigenvalues[k] + ridge);
    }
    Ok((0..n).map(|i| dot(vecs.row(i), &coeff)).collect())
}

fn vec_zeros(n: usize) -> Vec<f64> {
    alloc::vec![0.0; n]
}

fn residual(k: &SymMatrix, alpha: &[f64], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let mut r = k.mul_vec(alpha)?;
    for ((ri, &a), &yi) in r.iter_mut().zip(alpha).zip(y) {
        *ri = yi - (*ri + ridge * a);
    }
    Ok(r)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn fit_with(k: &SymMatrix, eig: &EigenDecomposition, y: &[f64], ridge: f64) -> Result<KernelModel> {
    let mut alpha = solve_with(eig, y, ridge)?;
    let y_norm = norm(y);
    let mut r = residual(k, &alpha, y, ridge)?;
    // Refinement recovers accuracy lost to rounding when λ_min + ridge is tiny.
    for _ in 0..3 {
        if norm(&r) <= RESIDUAL_TOL * y_norm {
            break;
        }
        let delta = solve_with(eig, &r, ridge)?;
        for (a, d) in alpha.iter_mut().zip(&delta) {
            *a += d;
        }
        r = residual(k, &alpha, y, ridge)?;
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Singular {
            min_eigenvalue: eig.min_eigenvalue() + ridge,
        });
    }
    Ok(KernelModel {
        dual_coefficients: alpha,
        training_labels: y.to_vec(),
        ridge,
        kernel_params: None,
        relative_residual: if y_norm > 0.0 { norm(&r) / y_norm } else { 0.0 },
    })
}

/// Kernel ridge regression on ±1 labels.
///
/// Fails with [`Error::Singular`] when `λ_min(K) + ridge ≤ 1e−12`; calibrate
/// the kernel or raise the ridge in that case.
pub fn fit_krr(k: &SymMatrix, y: &[f64], ridge: f64) -> Result<KernelModel> {
    if k.dim() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: y.len(),
        });
    }
    check_labels(y)?;
    check_ridge(ridge)?;
    k.check_finite()?;
    fit_with(k, &eig_sym(k)?, y, ridge)
}

/// [`fit_krr`] that also records the kernel's construction parameters.
pub fn fit_kernel(k: &KernelMatrix, y: &[f64], ridge: f64) -> Result<KernelModel> {
    let mut model = fit_krr(&k.matrix, y, ridge)?;
    model.kernel_params = Some(k.params);
    Ok(model)
}

/// Sign of a regression value, with `sign(0) = +1`.
pub fn sign_label(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Regression values `K_cross·α` and their sign labels.
pub fn predict(model: &KernelModel, k_cross: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if k_cross.cols() != model.dual_coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: model.dual_coefficients.len(),
            found: k_cross.cols(),
        });
    }
    let values = k_cross.mul_vec(&model.dual_coefficients)?;
    let labels = values.iter().map(|&v| sign_label(v)).collect();
    Ok((values, labels))
}

/// Predictions on the training set itself.
pub fn predict_train(model: &KernelModel, k: &SymMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    predict(model, &k.to_matrix())
}

/// Fraction of positions where the two label vectors agree.
pub fn accuracy(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(invalid("accuracy of an empty label set is undefined"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `c₁ = Yᵀ(Q + rI)⁻¹Y`.
pub fn model_complexity_c1(q: &SymMatrix, y: &[f64], ridge: f64) -> Result<f64> {
    if q.dim() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: y.len(),
        });
    }
    check_ridge(ridge)?;
    let (inv, _) = inv_ridge_from(&eig_sym(q)?, ridge)?;
    inv.quadratic_form(y)
}

/// Population variance of every entry of `x` taken together.
pub fn pooled_variance(x: &Matrix) -> Result<f64> {
    let values = x.as_slice();
    if values.is_empty() {
        return Err(invalid("variance of an empty matrix is undefined"));
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub gamma: f64,
    pub lambda: f64,
    /// Best validation accuracy.
    pub accuracy: f64,
    /// Number of fitted models, including ones that were singular.
    pub fits: usize,
}

/// Exhaustive RBF search over [`RBF_GAMMA_FACTORS`] × [`RBF_RIDGES`].
///
/// Bandwidths are scaled by `1/(d·Var)` with the variance pooled over the
/// training features. Ties go to the smaller ridge, then the smaller gamma.
pub fn grid_search_rbf(
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
) -> Result<GridSearchResult> {
    if x_train.rows() == 0 || x_val.rows() == 0 {
        return Err(invalid("grid search needs nonempty training and validation sets"));
    }
    if x_train.rows() != y_train.len() || x_val.rows() != y_val.len() {
        return Err(invalid("feature rows and labels differ in length"));
    }
    check_labels(y_train)?;
    check_labels(y_val)?;
    let var = pooled_variance(x_train)?;
    if !(var > 0.0) {
        return Err(invalid(
            "training features have zero variance, so the RBF bandwidth scale is undefined",
        ));
    }
    let scale = 1.0 / (x_train.cols() as f64 * var);
    let mut best: Option<(usize, usize, f64)> = None;
    let mut fits = 0;
    for (gi, factor) in RBF_GAMMA_FACTORS.iter().enumerate() {
        let gamma = factor * scale;
        let k = rbf_gram(x_train, gamma)?.matrix;
        let eig = eig_sym(&k)?;
        let cross = rbf_cross(x_train, x_val, gamma)?;
        for (li, &lambda) in RBF_RIDGES.iter().enumerate() {
            fits += 1;
            let Ok(model) = fit_with(&k, &eig, y_train, lambda) else {
                continue;
            };
            let (_, labels) = predict(&model, &cross)?;
            let acc = accuracy(&labels, y_val)?;
            let better = match best {
                None => true,
                Some((bg, bl, ba)) => acc > ba || (acc == ba && (li, gi) < (bl, bg)),
            };
            if better {
                best = Some((gi, li, acc));
            }
        }
    }
    let (gi, li, acc) = best.ok_or_else(|| invalid("every grid point produced a singular system"))?;
    Ok(GridSearchResult {
        gamma: RBF_GAMMA_FACTORS[gi] * scale,
        lambda: RBF_RIDGES[li],
        accuracy: acc,
        fits,
    })
}

/// Seeded split of `0..n` into fitting and validation halves.
///
/// The validation part gets `round(n·fraction)` rows, clamped so both parts
/// are nonempty.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(invalid("a validation split needs at least two rows"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("validation fraction must lie strictly between 0 and 1"));
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed_stream(seed, StreamRole::Validation, n as u64, 0));
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

/// Tuned RBF baseline: grid search on a seeded split of the training set,
/// then a refit on all training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBaseline {
    pub search: GridSearchResult,
    pub model: KernelModel,
}

pub fn fit_rbf_baseline(
    x_train: &Matrix,
    y_train: &[f64],
    validation_fraction: f64,
    seed: u64,
) -> Result<RbfBaseline> {
    let (fit_idx, val_idx) = validation_split(x_train.rows(), validation_fraction, seed)?;
    let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| y_train[i]).collect() };
    let search = grid_search_rbf(
        &x_train.select_rows(&fit_idx),
        &pick(&fit_idx),
        &x_train.select_rows(&val_idx),
        &pick(&val_idx),
    )?;
    let k = rbf_gram(x_train, search.gamma)?;
    let model = fit_kernel(&k, y_train, search.lambda)?;
    Ok(RbfBaseline { search, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gram_ideal;
    use crate::qsim::feature_state;
    use crate::rng::uniform;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn random_psd(dim: usize, seed: u64) -> SymMatrix {
        let mut rng = keyed_stream(seed, StreamRole::Synthetic, 5, dim as u64);
        let b: Vec<f64> = (0..dim * dim).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        SymMatrix::from_fn(dim, |i, j| (0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum())
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = keyed_stream(seed, StreamRole::Synthetic, 6, rows as u64);
        Matrix::from_fn(rows, cols, |_, _| uniform(&mut rng, -1.0, 1.0))
    }

    #[test]
    fn fit_examples() {
        let y = [1.0, -1.0, -1.0];
        let m = fit_krr(&SymMatrix::identity(3), &y, 0.0).unwrap();
        assert_eq!(m.dual_coefficients, y.to_vec());
        let m = fit_krr(&SymMatrix::diag(&[2.0, 2.0]), &[1.0, -1.0], 0.0).unwrap();
        assert_abs_diff_eq!(m.dual_coefficients[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.dual_coefficients[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn fit_rejects_singular_and_bad_labels() {
        let err = fit_krr(&SymMatrix::diag(&[1.0, 0.0]), &[1.0, -1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(fit_krr(&SymMatrix::identity(2), &[1.0, 0.5], 0.0).is_err());
        assert!(fit_krr(&SymMatrix::identity(2), &[1.0], 0.0).is_err());
        assert!(fit_krr(&SymMatrix::identity(2), &[1.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn near_interpolation_at_tiny_ridge() {
        for seed in 0..20 {
            let k = random_psd(12, seed).add_identity(0.05);
            let y: Vec<f64> = (0..12).map(|i| if (i * 7 + seed as usize).is_multiple_of(3) { 1.0 } else { -1.0 }).collect();
            let m = fit_krr(&k, &y, 1e-8).unwrap();
            assert!(m.relative_residual <= 1e-7);
            let (values, labels) = predict_train(&m, &k).unwrap();
            for (v, t) in values.iter().zip(&y) {
                assert!((v - t).abs() <= 1e-5);
            }
            assert_eq!(accuracy(&labels, &y).unwrap(), 1.0);
        }
    }

    #[test]
    fn residual_small_on_rank_deficient_quantum_kernel() {
        // 40 points on 2 qubits span at most 16 feature dimensions.
        let x = random_matrix(40, 2, 3);
        let q = gram_ideal(&x).unwrap().matrix;
        let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = fit_krr(&q, &y, DEFAULT_QUANTUM_RIDGE).unwrap();
        assert!(m.relative_residual <= 1e-7, "{}", m.relative_residual);
    }

    #[test]
    fn predict_examples() {
        let m = fit_krr(&SymMatrix::identity(2), &[1.0, -1.0], 0.0).unwrap();
        let (values, labels) = predict(&m, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(values, [0.0]);
        assert_eq!(labels, [1.0]);
        let (_, labels) = predict(&m, &SymMatrix::identity(2).to_matrix()).unwrap();
        assert_eq!(labels, m.training_labels);
        let cross = Matrix::from_rows(&[[0.3, 0.0], [0.0, 0.2]]).unwrap();
        let (_, labels) = predict(&m, &cross).unwrap();
        assert_eq!(labels, [1.0, -1.0]);
        assert!(predict(&m, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let a = [1.0, 1.0, -1.0, -1.0];
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(accuracy(&a, &[-1.0, -1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(accuracy(&a, &[1.0, -1.0, -1.0, 1.0]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1.0], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_permutation_equivariant(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40),
            seed in any::<u64>(),
        ) {
            let to = |b: bool| if b { 1.0 } else { -1.0 };
            let mut p: Vec<f64> = pairs.iter().map(|x| to(x.0)).collect();
            let mut t: Vec<f64> = pairs.iter().map(|x| to(x.1)).collect();
            let before = accuracy(&p, &t).unwrap();
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.shuffle(&mut keyed_stream(seed, StreamRole::Synthetic, 0, 0));
            p = order.iter().map(|&i| p[i]).collect();
            t = order.iter().map(|&i| t[i]).collect();
            prop_assert_eq!(accuracy(&p, &t).unwrap(), before);
        }
    }

    #[test]
    fn c1_examples() {
        assert_abs_diff_eq!(model_complexity_c1(&SymMatrix::identity(2), &[1.0, -1.0], 0.0).unwrap(), 2.0);
        assert_abs_diff_eq!(
            model_complexity_c1(&SymMatrix::diag(&[2.0, 2.0]), &[1.0, -1.0], 0.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    /// Real coordinates of `|φ⟩⟨φ|`, so that dot products give `Tr(ρ_i ρ_j)`.
    fn density_features(x: &[f64]) -> Vec<f64> {
        let amps = feature_state(x).unwrap().amplitudes().to_vec();
        let mut out = Vec::with_capacity(2 * amps.len() * amps.len());
        for a in &amps {
            for b in &amps {
                let e: Complex64 = a * b.conj();
                out.push(e.re);
                out.push(e.im);
            }
        }
        out
    }

    #[test]
    fn c1_matches_primal_norm() {
        let ridge = 1e-8;
        for (qubits, n, seed) in [(2, 5, 1u64), (3, 6, 2), (3, 8, 3), (1, 2, 4)] {
            let x = random_matrix(n, qubits, 100 + seed);
            let y: Vec<f64> = (0..n).map(|i| if (i + seed as usize).is_multiple_of(2) { 1.0 } else { -1.0 }).collect();
            let q = gram_ideal(&x).unwrap().matrix;
            let c1 = model_complexity_c1(&q, &y, ridge).unwrap();

            let feats: Vec<Vec<f64>> = (0..n).map(|i| density_features(x.row(i))).collect();
            let dim = feats[0].len();
            let f = DMatrix::from_fn(n, dim, |i, k| feats[i][k]);
            let yv = DVector::from_column_slice(&y);
            let lhs = f.transpose() * &f + DMatrix::identity(dim, dim) * ridge;
            let omega = lhs.cholesky().unwrap().solve(&(f.transpose() * yv));
            let primal = omega.norm_squared();
            assert!((c1 - primal).abs() <= 1e-6 * primal, "{qubits} {n}: {c1} vs {primal}");
        }
    }

    #[test]
    fn pooled_variance_matches_two_pass() {
        for seed in 0..20 {
            let x = random_matrix(7 + seed as usize, 3, seed);
            let vals = x.as_slice();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let mut ss = 0.0;
            for v in vals {
                ss += (v - mean).powi(2);
            }
            assert_abs_diff_eq!(pooled_variance(&x).unwrap(), ss / vals.len() as f64, epsilon = 1e-14);
        }
        let x = Matrix::from_rows(&[[1.0, 3.0], [1.0, 3.0]]).unwrap();
        assert_abs_diff_eq!(pooled_variance(&x).unwrap(), 1.0);
    }

    fn blobs(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = keyed_stream(seed, StreamRole::Synthetic, 9, n as u64);
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Matrix::from_fn(n, 2, |i, _| y[i] * 2.0 + uniform(&mut rng, -0.5, 0.5));
        (x, y)
    }

    #[test]
    fn grid_search_separable_blobs() {
        let (xt, yt) = blobs(30, 1);
        let (xv, yv) = blobs(20, 2);
        let r = grid_search_rbf(&xt, &yt, &xv, &yv).unwrap();
        assert_eq!(r.fits, 180);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn grid_search_on_training_set_picks_smallest_ridge() {
        let x = random_matrix(25, 3, 7);
        let y: Vec<f64> = (0..25).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let r = grid_search_rbf(&x, &y, &x, &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.lambda, RBF_RIDGES[0]);
    }

    #[test]
    fn grid_search_rejects_constant_features() {
        let x = Matrix::from_fn(4, 2, |_, _| 0.5);
        let y = [1.0, -1.0, 1.0, -1.0];
        assert!(grid_search_rbf(&x, &y, &x, &y).is_err());
    }

    #[test]
    fn validation_split_partitions() {
        for seed in 0..50 {
            let (fit, val) = validation_split(11, 0.5, seed).unwrap();
            assert_eq!(fit.len() + val.len(), 11);
            let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
            all.sort();
            assert_eq!(all, (0..11).collect::<Vec<_>>());
        }
        assert_eq!(validation_split(11, 0.5, 3).unwrap(), validation_split(11, 0.5, 3).unwrap());
        assert!(validation_split(1, 0.5, 0).is_err());
    }

    #[test]
    fn baseline_refits_on_all_rows() {
        let (x, y) = blobs(24, 5);
        let b = fit_rbf_baseline(&x, &y, 0.5, 1).unwrap();
        assert_eq!(b.model.dual_coefficients.len(), 24);
        assert_eq!(b.model.kernel_params.unwrap().gamma, Some(b.search.gamma));
    }
}
