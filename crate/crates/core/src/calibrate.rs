//! Spectral repair of indefinite kernels.
//!
//! All transforms act on the eigenvalues of the input and keep its
//! eigenvectors. Zero eigenvalues count as nonnegative. Nothing renormalizes
//! the diagonal afterwards.

use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::check::CheckStatus;
use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_sym, frobenius_norm, EigenDecomposition, SymMatrix};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Method {
    Clip,
    Flip,
    Shift,
    /// Raise every eigenvalue below `delta` to `delta`.
    NearestPsd { delta: f64 },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Clip => "clip",
            Method::Flip => "flip",
            Method::Shift => "shift",
            Method::NearestPsd { .. } => "nearest",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::NearestPsd { delta } => write!(f, "nearest:{delta}"),
            m => f.write_str(m.label()),
        }
    }
}

/// Parses `clip`, `flip`, `shift` or `nearest:<delta>`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "clip" => Ok(Method::Clip),
            "flip" => Ok(Method::Flip),
            "shift" => Ok(Method::Shift),
            _ => {
                let delta = s
                    .strip_prefix("nearest:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .ok_or_else(|| invalid(alloc::format!("unknown calibration method {s:?}")))?;
                if !(delta >= 0.0) {
                    return Err(invalid("nearest-PSD floor must be nonnegative"));
                }
                Ok(Method::NearestPsd { delta })
            }
        }
    }
}

/// Zeroes negative eigenvalues.
pub fn clip(w: &SymMatrix) -> Result<SymMatrix> {
    Ok(clip_from(&eig_sym(w)?))
}

fn clip_from(eig: &EigenDecomposition) -> SymMatrix {
    eig.reassemble(|l| l.max(0.0))
}

/// Replaces every eigenvalue by its absolute value.
pub fn flip(w: &SymMatrix) -> Result<SymMatrix> {
    Ok(eig_sym(w)?.reassemble(f64::abs))
}

/// `W + |min(λ_min, 0)|·I`. Off-diagonal entries are untouched.
pub fn shift(w: &SymMatrix) -> Result<SymMatrix> {
    let lmin = eig_sym(w)?.min_eigenvalue();
    Ok(w.add_identity(lmin.min(0.0).abs()))
}

/// Eigenvalue floor at `delta`.
pub fn nearest_psd(w: &SymMatrix, delta: f64) -> Result<SymMatrix> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(invalid("nearest-PSD floor must be a finite nonnegative number"));
    }
    Ok(eig_sym(w)?.reassemble(|l| l.max(delta)))
}

pub fn apply(w: &SymMatrix, method: Method) -> Result<SymMatrix> {
    match method {
        Method::Clip => clip(w),
        Method::Flip => flip(w),
        Method::Shift => shift(w),
        Method::NearestPsd { delta } => nearest_psd(w, delta),
    }
}

/// Frobenius distances to a reference kernel before and after a transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: Method,
    /// `‖Q − W‖_F`
    pub dist_before: f64,
    /// `‖Q − W_⋄‖_F`
    pub dist_after: f64,
    pub min_eig_before: f64,
    pub min_eig_after: f64,
    /// Whether `dist_after ≤ dist_before`, or not applicable when the
    /// hypotheses behind that inequality fail for this input.
    pub passed_lemma: CheckStatus,
}

/// Relative tolerance for calling a reference kernel PSD.
const PSD_TOL: f64 = 1e-9;

/// Transforms `w` and compares both versions against the ideal `q`.
///
/// The distance inequality is only asserted when `q` is PSD; for `Shift` the
/// input must also have trace `dim` (within 1e-6), and for `NearestPsd` the
/// reference must itself satisfy the floor.
pub fn calibrate_and_report(
    q: &SymMatrix,
    w: &SymMatrix,
    method: Method,
) -> Result<(SymMatrix, CalibrationReport)> {
    if q.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: w.dim(),
        });
    }
    let w_eig = eig_sym(w)?;
    let out = match method {
        Method::Clip => clip_from(&w_eig),
        Method::Flip => w_eig.reassemble(f64::abs),
        Method::Shift => w.add_identity(w_eig.min_eigenvalue().min(0.0).abs()),
        Method::NearestPsd { delta } => nearest_psd(w, delta)?,
    };
    let q_eig = eig_sym(q)?;
    let q_scale = q_eig.max_eigenvalue().abs().max(1.0);
    let q_min = q_eig.min_eigenvalue();
    let mut applicable = q_min >= -PSD_TOL * q_scale;
    match method {
        Method::Shift => applicable &= (w.trace() - w.dim() as f64).abs() <= 1e-6,
        Method::NearestPsd { delta } => applicable &= q_min >= delta - PSD_TOL * q_scale,
        Method::Clip | Method::Flip => {}
    }
    let dist_before = frobenius_norm(&q.sub(w)?);
    let dist_after = frobenius_norm(&q.sub(&out)?);
    let passed_lemma = if applicable {
        CheckStatus::from_bool(dist_after <= dist_before * (1.0 + 1e-9))
    } else {
        CheckStatus::NotApplicable
    };
    let report = CalibrationReport {
        method,
        dist_before,
        dist_after,
        min_eig_before: w_eig.min_eigenvalue(),
        min_eig_after: eig_sym(&out)?.min_eigenvalue(),
        passed_lemma,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed_stream, uniform, StreamRole};
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;

    fn random_sym(dim: usize, seed: u64) -> SymMatrix {
        let mut rng = keyed_stream(seed, StreamRole::Synthetic, 41, dim as u64);
        SymMatrix::from_fn(dim, |_, _| uniform(&mut rng, -1.0, 1.0))
    }

    fn random_psd(dim: usize, seed: u64) -> SymMatrix {
        let mut rng = keyed_stream(seed, StreamRole::Synthetic, 42, dim as u64);
        let b: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| uniform(&mut rng, -1.0, 1.0)).collect())
            .collect();
        SymMatrix::from_fn(dim, |i, j| (0..dim).map(|k| b[k][i] * b[k][j]).sum())
    }

    fn close(a: &SymMatrix, b: &SymMatrix, tol: f64) -> bool {
        a.sub(b).unwrap().max_abs() <= tol
    }

    #[test]
    fn clip_examples() {
        let out = clip(&SymMatrix::diag(&[2.0, -1.0])).unwrap();
        assert!(close(&out, &SymMatrix::diag(&[2.0, 0.0]), 1e-15));
        let p = random_psd(5, 1);
        assert!(close(&clip(&p).unwrap(), &p, 1e-10));
    }

    #[test]
    fn flip_examples() {
        assert!(close(&flip(&SymMatrix::diag(&[2.0, -1.0])).unwrap(), &SymMatrix::diag(&[2.0, 1.0]), 1e-15));
        assert!(close(&flip(&SymMatrix::diag(&[-3.0])).unwrap(), &SymMatrix::diag(&[3.0]), 1e-15));
        let p = random_psd(4, 2);
        assert!(close(&flip(&p).unwrap(), &p, 1e-10));
    }

    #[test]
    fn flip_preserves_frobenius_norm_and_abs_spectrum() {
        for seed in 0..30 {
            let w = random_sym(7, seed);
            let f = flip(&w).unwrap();
            assert_abs_diff_eq!(frobenius_norm(&f), frobenius_norm(&w), epsilon = 1e-10);
            let mut abs: Vec<f64> = eig_sym(&w).unwrap().eigenvalues.iter().map(|l| l.abs()).collect();
            abs.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in eig_sym(&f).unwrap().eigenvalues.iter().zip(&abs) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn shift_examples() {
        assert!(close(&shift(&SymMatrix::diag(&[2.0, -1.0])).unwrap(), &SymMatrix::diag(&[3.0, 0.0]), 1e-14));
        let p = random_psd(4, 3);
        assert_eq!(shift(&p).unwrap(), p);
        let swap = SymMatrix::from_upper(2, alloc::vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = shift(&swap).unwrap();
        assert!(close(&out, &SymMatrix::from_fn(2, |_, _| 1.0), 1e-14));
    }

    #[test]
    fn shift_keeps_off_diagonal() {
        let w = random_sym(9, 4);
        let s = shift(&w).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    assert_eq!(s.get(i, j), w.get(i, j));
                }
            }
        }
        assert!(eig_sym(&s).unwrap().min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn nearest_examples() {
        for seed in 0..10 {
            let w = random_sym(6, 10 + seed);
            assert!(close(&nearest_psd(&w, 0.0).unwrap(), &clip(&w).unwrap(), 1e-10));
            let out = nearest_psd(&w, 0.3).unwrap();
            assert!(eig_sym(&out).unwrap().min_eigenvalue() >= 0.3 - 1e-10);
        }
        assert!(close(
            &nearest_psd(&SymMatrix::diag(&[2.0, -1.0]), 0.1).unwrap(),
            &SymMatrix::diag(&[2.0, 0.1]),
            1e-15
        ));
        assert!(close(&nearest_psd(&SymMatrix::identity(3), 2.0).unwrap(), &SymMatrix::diag(&[2.0; 3]), 1e-15));
        assert!(nearest_psd(&SymMatrix::identity(2), -0.1).is_err());
    }

    #[test]
    fn idempotence() {
        for seed in 0..20 {
            let w = random_sym(8, 100 + seed);
            for m in [Method::Clip, Method::Flip, Method::Shift, Method::NearestPsd { delta: 0.05 }] {
                let once = apply(&w, m).unwrap();
                let twice = apply(&once, m).unwrap();
                assert!(close(&once, &twice, 1e-9), "{m}");
            }
        }
    }

    #[test]
    fn clip_is_nearest_among_floored_spectra() {
        // Grid perturbation oracle: any other PSD spectrum in W's eigenbasis
        // sits at least as far from W.
        for seed in 0..20 {
            let w = random_sym(3, 200 + seed);
            let eig = eig_sym(&w).unwrap();
            for delta in [0.0, 0.2] {
                let best = frobenius_norm(&w.sub(&nearest_psd(&w, delta).unwrap()).unwrap());
                for a in 0..5 {
                    for b in 0..5 {
                        for c in 0..5 {
                            let steps = [a, b, c];
                            let mut shifted = eig.clone();
                            for (l, s) in shifted.eigenvalues.iter_mut().zip(steps) {
                                *l = l.max(delta) + 0.05 * s as f64;
                            }
                            let cand = shifted.reassemble(|l| l);
                            let d = frobenius_norm(&w.sub(&cand).unwrap());
                            assert!(d >= best - 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn report_examples() {
        let q = SymMatrix::identity(3);
        let (_, r) = calibrate_and_report(&q, &q, Method::Clip).unwrap();
        assert_eq!(r.dist_before, 0.0);
        assert!(r.dist_after < 1e-15);
        assert_eq!(r.passed_lemma, CheckStatus::Pass);

        let q = SymMatrix::identity(2);
        let w = SymMatrix::diag(&[1.0, -0.2]);
        let (out, r) = calibrate_and_report(&q, &w, Method::Clip).unwrap();
        assert_abs_diff_eq!(r.dist_before, 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.dist_after, 1.0, epsilon = 1e-15);
        assert_eq!(r.passed_lemma, CheckStatus::Pass);
        assert_abs_diff_eq!(r.min_eig_before, -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.min_eig_after, 0.0, epsilon = 1e-15);
        assert!(close(&out, &SymMatrix::diag(&[1.0, 0.0]), 1e-15));
        assert!(calibrate_and_report(&q, &SymMatrix::identity(3), Method::Clip).is_err());
    }

    #[test]
    fn clip_and_flip_never_move_away_from_psd_reference() {
        for seed in 0..1000u64 {
            let dim = 2 + (seed % 63) as usize;
            let q = random_psd(dim, 5000 + seed);
            let w = q.add(&random_sym(dim, 9000 + seed).scale(0.5)).unwrap();
            for m in [Method::Clip, Method::Flip] {
                let (_, r) = calibrate_and_report(&q, &w, m).unwrap();
                assert_eq!(r.passed_lemma, CheckStatus::Pass, "{m} seed {seed}");
            }
        }
    }

    #[test]
    fn shift_distance_identity() {
        // With Tr(W) = n and Q of unit diagonal, shifting by c = |λ_min| adds
        // exactly n·c² to the squared distance.
        for seed in 0..200u64 {
            let dim = 2 + (seed % 30) as usize;
            let mut w = random_sym(dim, 700 + seed);
            let adjust = (dim as f64 - w.trace()) / dim as f64;
            w = w.add_identity(adjust);
            let q = SymMatrix::identity(dim);
            let (_, r) = calibrate_and_report(&q, &w, Method::Shift).unwrap();
            let c = r.min_eig_before.min(0.0).abs();
            let expect = r.dist_before * r.dist_before + dim as f64 * c * c;
            assert_abs_diff_eq!(r.dist_after * r.dist_after, expect, epsilon = 1e-9 * expect.max(1.0));
            let want = if c == 0.0 { CheckStatus::Pass } else { CheckStatus::Fail };
            assert_eq!(r.passed_lemma, want);
        }
    }

    #[test]
    fn preconditions_mark_not_applicable() {
        let q = SymMatrix::diag(&[1.0, -0.5]);
        let w = SymMatrix::diag(&[1.0, 1.0]);
        let (_, r) = calibrate_and_report(&q, &w, Method::Clip).unwrap();
        assert_eq!(r.passed_lemma, CheckStatus::NotApplicable);
        let q = SymMatrix::identity(2);
        let w = SymMatrix::diag(&[3.0, -0.5]);
        let (_, r) = calibrate_and_report(&q, &w, Method::Shift).unwrap();
        assert_eq!(r.passed_lemma, CheckStatus::NotApplicable);
        let (_, r) = calibrate_and_report(&q, &w, Method::NearestPsd { delta: 2.0 }).unwrap();
        assert_eq!(r.passed_lemma, CheckStatus::NotApplicable);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("clip".parse::<Method>().unwrap(), Method::Clip);
        assert_eq!("nearest:0.01".parse::<Method>().unwrap(), Method::NearestPsd { delta: 0.01 });
        assert!("nearest:-1".parse::<Method>().is_err());
        assert!("warp".parse::<Method>().is_err());
        assert_eq!(alloc::format!("{}", Method::NearestPsd { delta: 0.5 }), "nearest:0.5");
    }
}
