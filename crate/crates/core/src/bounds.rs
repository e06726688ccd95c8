//! Generalization-bound terms for noisy kernels, the noise breakdown
//! threshold, inverse-saturation diagnostics and a Hoeffding envelope check.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::check::{CheckReport, CheckStatus};
use crate::error::{invalid, Error, Result};
use crate::kernels::{NoiseModel, Shots};
use crate::linalg::{eig_sym, frobenius_norm, inv_ridge_from, inv_sym, spectral_norm, SymMatrix};
use crate::rng::{bernoulli_count, keyed_stream, StreamRole};
#[allow(unused_imports)]
use num_traits::Float;

/// Confidence parameter used when none is configured.
pub const DEFAULT_CONFIDENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: Shots,
    pub num_qubits: usize,
    /// Effective depolarization rate.
    pub p: f64,
    pub delta: f64,
    /// `YᵀQ⁻¹Y`
    pub c1: f64,
    /// `‖Q⁻¹‖₂`
    pub c_q: f64,
    pub c2: f64,
    /// `√(c₁/n)`
    pub term_ideal: f64,
    /// `√(n/(c₂√m))`; `+∞` when `c₂ = 0`.
    pub term_noise: f64,
    pub breakdown_p: f64,
}

fn noise_factor(num_qubits: usize) -> f64 {
    1.0 + 0.5f64.powi(num_qubits as i32 + 1)
}

fn check_confidence(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("confidence delta must lie strictly between 0 and 1"));
    }
    Ok(())
}

/// `c₂` and the noise term for a kernel with `‖Q⁻¹‖₂ = c_q`.
///
/// `c₂ = max(c_Q⁻²·(A + √m·p·(1 + 2^{−(N+1)}))⁻¹ − (n/√m)·c_Q⁻¹, 0)` with
/// `A = √(½·ln(4n²/δ))`. For `m = ∞` the reported `c₂` is its limit and the
/// noise term is the limit of `√(n/(c₂√m))`: zero without noise, otherwise
/// `√(n/(c_Q⁻²/p′ − n/c_Q))`, infinite past the breakdown rate.
pub fn noise_term(
    n: usize,
    m: Shots,
    p: f64,
    num_qubits: usize,
    c_q: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    check_confidence(delta)?;
    if n == 0 {
        return Err(invalid("bound needs at least one sample"));
    }
    if !(c_q > 0.0) || !c_q.is_finite() {
        return Err(invalid("c_Q must be positive and finite"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("noise rate must lie in [0, 1]"));
    }
    let nf = n as f64;
    let a = (0.5 * (4.0 * nf * nf / delta).ln()).sqrt();
    let p_eff = p * noise_factor(num_qubits);
    let inv_cq = 1.0 / c_q;
    match m {
        Shots::Finite(shots) => {
            let root_m = (shots as f64).sqrt();
            let c2 = (inv_cq * inv_cq / (a + root_m * p_eff) - nf / root_m * inv_cq).max(0.0);
            let term = if c2 > 0.0 {
                (nf / (c2 * root_m)).sqrt()
            } else {
                f64::INFINITY
            };
            Ok((c2, term))
        }
        Shots::Infinite if p_eff == 0.0 => Ok((inv_cq * inv_cq / a, 0.0)),
        Shots::Infinite => {
            let scaled = inv_cq * inv_cq / p_eff - nf * inv_cq;
            let term = if scaled > 0.0 {
                (nf / scaled).sqrt()
            } else {
                f64::INFINITY
            };
            Ok((0.0, term))
        }
    }
}

/// `1/(n·c_Q·(1 + 2^{−(N+1)}))`.
pub fn breakdown_from(n: usize, c_q: f64, num_qubits: usize) -> f64 {
    1.0 / (n as f64 * c_q * noise_factor(num_qubits))
}

/// `‖Q⁻¹‖₂`, requiring `Q` positive definite.
pub fn inverse_norm(q: &SymMatrix) -> Result<f64> {
    let eig = eig_sym(q)?;
    let lmin = eig.min_eigenvalue();
    if !(lmin > 1e-14 * eig.max_eigenvalue().abs().max(1.0)) {
        return Err(Error::Singular {
            min_eigenvalue: lmin,
        });
    }
    Ok(1.0 / lmin)
}

/// Noise rate above which `c₂` vanishes for every shot count.
pub fn breakdown_threshold(q: &SymMatrix, num_qubits: usize) -> Result<f64> {
    Ok(breakdown_from(q.dim(), inverse_norm(q)?, num_qubits))
}

/// Evaluates every bound term for labels `y` on the positive-definite `q`.
pub fn generalization_bound(
    q: &SymMatrix,
    y: &[f64],
    m: Shots,
    noise: &NoiseModel,
    num_qubits: usize,
    delta: f64,
) -> Result<BoundReport> {
    if q.dim() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: y.len(),
        });
    }
    let eig = eig_sym(q)?;
    let lmin = eig.min_eigenvalue();
    if !(lmin > 1e-14 * eig.max_eigenvalue().abs().max(1.0)) {
        return Err(Error::Singular {
            min_eigenvalue: lmin,
        });
    }
    let c_q = 1.0 / lmin;
    let (q_inv, _) = inv_ridge_from(&eig, 0.0)?;
    let c1 = q_inv.quadratic_form(y)?;
    let n = q.dim();
    let p = noise.effective_rate();
    let (c2, term_noise) = noise_term(n, m, p, num_qubits, c_q, delta)?;
    Ok(BoundReport {
        n,
        m,
        num_qubits,
        p,
        delta,
        c1,
        c_q,
        c2,
        term_ideal: (c1 / n as f64).sqrt(),
        term_noise,
        breakdown_p: breakdown_from(n, c_q, num_qubits),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    /// `‖Q⁻¹ − Ŵ⁻¹‖₂`
    pub s2: f64,
    /// `‖Q⁻¹ − Ŵ⁻¹‖_F`
    pub s_f: f64,
    pub sqrt_s2: f64,
    /// Mean absolute entry of `Q⁻¹ − Ŵ⁻¹`.
    pub mean_abs_deviation: f64,
    /// `√(√n·ε)` with `ε` the mean absolute deviation; a plotting aid.
    pub sqrt_root_n_eps: f64,
    /// `s2 ≥ s_F/√n`, with `lhs = s2` and `rhs = s_F/√n`.
    pub check: CheckReport,
}

/// Compares the inverses of `Q + rI` and `Ŵ + rI`. `Ŵ` may be indefinite.
pub fn saturation_diagnostic(q: &SymMatrix, w_hat: &SymMatrix, ridge: f64) -> Result<SaturationReport> {
    if q.dim() != w_hat.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: w_hat.dim(),
        });
    }
    let diff = inv_sym(&q.add_identity(ridge))?.sub(&inv_sym(&w_hat.add_identity(ridge))?)?;
    let n = q.dim() as f64;
    let s2 = spectral_norm(&diff)?;
    let s_f = frobenius_norm(&diff);
    let eps = diff.as_slice().iter().map(|v| v.abs()).sum::<f64>() / (n * n);
    let rhs = s_f / n.sqrt();
    Ok(SaturationReport {
        s2,
        s_f,
        sqrt_s2: s2.sqrt(),
        mean_abs_deviation: eps,
        sqrt_root_n_eps: (n.sqrt() * eps).sqrt(),
        check: CheckReport {
            lhs: s2,
            rhs,
            status: CheckStatus::from_bool(s2 >= rhs * (1.0 - 1e-12)),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingReport {
    pub q: f64,
    pub m: u64,
    pub gap: f64,
    pub trials: u64,
    pub violations: u64,
    /// Fraction of trials with `|mean − q| ≥ gap/2`.
    pub empirical_rate: f64,
    /// `2·exp(−gap²·m/2)`
    pub bound: f64,
    /// Three binomial standard deviations at the bound, plus 1e−6.
    pub slack: f64,
    pub status: CheckStatus,
}

/// Monte-Carlo check of the two-sided Hoeffding envelope for `m`-shot means.
///
/// Trial `t` draws from the stream keyed by `(seed, t, m)`. The binomial
/// slack uses `min(bound, 1)` so it stays real when the bound exceeds 1.
pub fn hoeffding_violation_test(q: f64, m: u64, gap: f64, trials: u64, seed: u64) -> Result<HoeffdingReport> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("probability must lie in [0, 1]"));
    }
    if m == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    if !(gap > 0.0) || !gap.is_finite() {
        return Err(invalid("gap must be positive and finite"));
    }
    if trials < 1000 {
        return Err(invalid("at least 1000 trials are required"));
    }
    let violations = (0..trials)
        .filter(|&t| {
            let mut rng = keyed_stream(seed, StreamRole::Hoeffding, t, m);
            let mean = bernoulli_count(&mut rng, q, m) as f64 / m as f64;
            (mean - q).abs() >= gap / 2.0
        })
        .count() as u64;
    let empirical_rate = violations as f64 / trials as f64;
    let bound = 2.0 * (-gap * gap * m as f64 / 2.0).exp();
    let b = bound.min(1.0);
    let slack = 3.0 * (b * (1.0 - b) / trials as f64).sqrt() + 1e-6;
    Ok(HoeffdingReport {
        q,
        m,
        gap,
        trials,
        violations,
        empirical_rate,
        bound,
        slack,
        status: CheckStatus::from_bool(empirical_rate <= bound + slack),
    })
}

/// Noise terms over a grid, for plotting or property checks: one row per
/// `(n, m, p)` in the order given.
pub fn noise_term_grid(
    ns: &[usize],
    ms: &[Shots],
    ps: &[f64],
    num_qubits: usize,
    c_q: f64,
    delta: f64,
) -> Result<Vec<(usize, Shots, f64, f64)>> {
    let mut rows = Vec::with_capacity(ns.len() * ms.len() * ps.len());
    for &n in ns {
        for &m in ms {
            for &p in ps {
                let (_, term) = noise_term(n, m, p, num_qubits, c_q, delta)?;
                rows.push((n, m, p, term));
            }
        }
    }
    Ok(rows)
}
