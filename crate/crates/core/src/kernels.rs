//! Kernel matrices: ideal fidelity Gram, depolarized expectation, finite-shot
//! estimate, classical RBF, and the geometric difference between two kernels.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calibrate::Method;
use crate::check::{CheckReport, CheckStatus};
use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_sym, inv_ridge_from, Matrix, SymMatrix};
use crate::qsim::{feature_state, state_fidelity, StateVector, MAX_QUBITS};
use crate::rng::{bernoulli_count, keyed_stream, StreamRole};
#[allow(unused_imports)]
use num_traits::Float;

/// Constant the depolarized kernel relaxes towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixingConstant {
    /// `2^{−N}`: all-zeros probability of the maximally mixed output.
    #[default]
    InverseDim,
    /// `2^{−(N+1)}`, the constant appearing in the generalization bound.
    HalfInverseDim,
}

impl MixingConstant {
    pub fn value(self, num_qubits: usize) -> f64 {
        match self {
            MixingConstant::InverseDim => 0.5f64.powi(num_qubits as i32),
            MixingConstant::HalfInverseDim => 0.5f64.powi(num_qubits as i32 + 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MixingConstant::InverseDim => "inverse_dim",
            MixingConstant::HalfInverseDim => "half_inverse_dim",
        }
    }
}

/// Layer-wise depolarization folded into a single channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p_tilde: f64,
    pub layers: u32,
    pub mixing: MixingConstant,
}

impl NoiseModel {
    pub const DEFAULT_LAYERS: u32 = 8;

    pub fn new(p_tilde: f64, layers: u32, mixing: MixingConstant) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_tilde) {
            return Err(invalid("per-layer depolarization rate must lie in [0, 1]"));
        }
        if layers == 0 {
            return Err(invalid("layer count must be positive"));
        }
        Ok(NoiseModel {
            p_tilde,
            layers,
            mixing,
        })
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            p_tilde: 0.0,
            layers: Self::DEFAULT_LAYERS,
            mixing: MixingConstant::InverseDim,
        }
    }

    /// `p = 1 − (1 − p̃)^L`.
    pub fn effective_rate(&self) -> f64 {
        crate::qsim::folded_rate(self.p_tilde, self.layers)
    }
}

/// Measurement budget per kernel entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shots {
    Finite(u64),
    /// Exact expectation values, no sampling.
    Infinite,
}

impl Shots {
    pub fn finite(self) -> Option<u64> {
        match self {
            Shots::Finite(m) => Some(m),
            Shots::Infinite => None,
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Finite(m) => write!(f, "{m}"),
            Shots::Infinite => f.write_str("inf"),
        }
    }
}

impl core::str::FromStr for Shots {
    type Err = Error;

    fn from_str(s: &str) -> Result<Shots> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Shots::Infinite);
        }
        match s.parse::<u64>() {
            Ok(m) if m >= 1 => Ok(Shots::Finite(m)),
            _ => Err(invalid(alloc::format!(
                "shot count must be a positive integer or \"inf\", got {s:?}"
            ))),
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Finite(m) => s.serialize_u64(*m),
            Shots::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Shots, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("shot count must be at least 1")),
            Raw::Int(m) => Ok(Shots::Finite(m)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Ideal,
    NoisyExpectation,
    ShotSampled,
    Calibrated { method: Method },
    Rbf,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Ideal => "ideal",
            Provenance::NoisyExpectation => "noisy_expectation",
            Provenance::ShotSampled => "shot_sampled",
            Provenance::Calibrated { .. } => "calibrated",
            Provenance::Rbf => "rbf",
        }
    }
}

/// Parameters a kernel was built with; unset fields did not apply.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelParams {
    pub num_qubits: Option<usize>,
    pub p_tilde: Option<f64>,
    pub layers: Option<u32>,
    pub p: Option<f64>,
    pub mixing: Option<MixingConstant>,
    pub shots: Option<Shots>,
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub fix_diagonal: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub matrix: SymMatrix,
    pub provenance: Provenance,
    pub params: KernelParams,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn expect(&self, expected: Provenance) -> Result<()> {
        if core::mem::discriminant(&self.provenance) != core::mem::discriminant(&expected) {
            return Err(Error::WrongProvenance {
                expected: expected.name(),
                found: self.provenance.name(),
            });
        }
        Ok(())
    }
}

fn check_width(x: &Matrix) -> Result<()> {
    if x.rows() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    if x.cols() == 0 || x.cols() > MAX_QUBITS {
        return Err(invalid(alloc::format!(
            "feature width {} outside supported qubit range 1..={MAX_QUBITS}",
            x.cols()
        )));
    }
    Ok(())
}

/// Encoded states of every row.
pub fn encode_rows(x: &Matrix) -> Result<Vec<StateVector>> {
    check_width(x)?;
    (0..x.rows()).map(|i| feature_state(x.row(i))).collect()
}

/// Ideal fidelity kernel `Q_ij = |⟨φ(x_j)|φ(x_i)⟩|²`, one qubit per feature.
pub fn gram_ideal(x: &Matrix) -> Result<KernelMatrix> {
    let states = encode_rows(x)?;
    Ok(gram_from_states(&states))
}

pub fn gram_from_states(states: &[StateVector]) -> KernelMatrix {
    let matrix = SymMatrix::from_fn(states.len(), |i, j| state_fidelity(&states[i], &states[j]));
    KernelMatrix {
        matrix,
        provenance: Provenance::Ideal,
        params: KernelParams {
            num_qubits: states.first().map(|s| s.num_qubits()),
            ..KernelParams::default()
        },
    }
}

/// `(1 − p)·q + p·c_N` for one fidelity value.
pub fn noisy_entry(q: f64, p: f64, c_n: f64) -> f64 {
    ((1.0 - p) * q + p * c_n).clamp(0.0, 1.0)
}

/// Depolarized expectation kernel.
///
/// With `fix_diagonal` the diagonal is pinned to 1. When the mixing constant
/// is [`MixingConstant::HalfInverseDim`] the entrywise bound
/// `|Q_ij − Q̃_ij| ≤ p·(Q_ij + 2^{−(N+1)})` is checked and returned; `lhs` is
/// the largest excess over the bound.
pub fn apply_noise(
    q: &KernelMatrix,
    noise: &NoiseModel,
    fix_diagonal: bool,
) -> Result<(KernelMatrix, Option<CheckReport>)> {
    q.expect(Provenance::Ideal)?;
    let n_qubits = q
        .params
        .num_qubits
        .ok_or_else(|| invalid("ideal kernel does not record its qubit count"))?;
    let p = noise.effective_rate();
    let c_n = noise.mixing.value(n_qubits);
    let matrix = q.matrix.map(|i, j, v| {
        if i == j && fix_diagonal {
            1.0
        } else {
            noisy_entry(v, p, c_n)
        }
    });
    let check = (noise.mixing == MixingConstant::HalfInverseDim).then(|| {
        let mut excess = f64::NEG_INFINITY;
        for i in 0..matrix.dim() {
            for j in i..matrix.dim() {
                let qv = q.matrix.get(i, j);
                let gap = (qv - matrix.get(i, j)).abs() - p * (qv + c_n);
                excess = excess.max(gap);
            }
        }
        CheckReport {
            lhs: excess,
            rhs: 0.0,
            status: CheckStatus::from_bool(excess <= 1e-12),
        }
    });
    let params = KernelParams {
        p_tilde: Some(noise.p_tilde),
        layers: Some(noise.layers),
        p: Some(p),
        mixing: Some(noise.mixing),
        fix_diagonal: Some(fix_diagonal),
        ..q.params
    };
    Ok((
        KernelMatrix {
            matrix,
            provenance: Provenance::NoisyExpectation,
            params,
        },
        check,
    ))
}

/// Mean of `shots` Bernoulli(`prob`) draws from the stream keyed by
/// `(seed, role, i, j)`.
pub fn sample_entry(prob: f64, shots: u64, seed: u64, role: StreamRole, i: u64, j: u64) -> f64 {
    let mut rng = keyed_stream(seed, role, i, j);
    bernoulli_count(&mut rng, prob, shots) as f64 / shots as f64
}

/// Finite-shot estimate `Ŵ_ij = (1/m)·Σ_k V_k`, `V_k ~ Ber(Q̃_ij)`.
///
/// Each unordered pair `i ≤ j` owns the stream `(seed, i, j)`. A diagonal
/// pinned upstream by `fix_diagonal` stays at 1.
pub fn sample_shots(qt: &KernelMatrix, shots: u64, seed: u64) -> Result<KernelMatrix> {
    qt.expect(Provenance::NoisyExpectation)?;
    if shots == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    if qt.matrix.min_entry() < 0.0 || qt.matrix.max_entry() > 1.0 {
        return Err(invalid("expectation kernel entries must lie in [0, 1]"));
    }
    let fixed = qt.params.fix_diagonal.unwrap_or(false);
    let matrix = qt.matrix.map(|i, j, v| {
        if i == j && fixed {
            1.0
        } else {
            sample_entry(v, shots, seed, StreamRole::TrainShots, i as u64, j as u64)
        }
    });
    Ok(KernelMatrix {
        matrix,
        provenance: Provenance::ShotSampled,
        params: KernelParams {
            shots: Some(Shots::Finite(shots)),
            seed: Some(seed),
            ..qt.params
        },
    })
}

/// Sampling with the `inf` sentinel, which returns `Q̃` unchanged.
pub fn estimate(qt: &KernelMatrix, shots: Shots, seed: u64) -> Result<KernelMatrix> {
    match shots {
        Shots::Finite(m) => sample_shots(qt, m, seed),
        Shots::Infinite => {
            qt.expect(Provenance::NoisyExpectation)?;
            let mut out = qt.clone();
            out.params.shots = Some(Shots::Infinite);
            Ok(out)
        }
    }
}

/// Ideal → depolarized → sampled training kernel in one call.
pub fn quantum_gram(
    states: &[StateVector],
    noise: &NoiseModel,
    shots: Shots,
    fix_diagonal: bool,
    seed: u64,
) -> Result<KernelMatrix> {
    let ideal = gram_from_states(states);
    let (noisy, _) = apply_noise(&ideal, noise, fix_diagonal)?;
    estimate(&noisy, shots, seed)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("RBF gamma must be a positive finite number"));
    }
    Ok(())
}

/// `K_ij = exp(−γ·‖x_i − x_j‖²)`.
pub fn rbf_gram(x: &Matrix, gamma: f64) -> Result<KernelMatrix> {
    check_gamma(gamma)?;
    if x.rows() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    let matrix = SymMatrix::from_fn(x.rows(), |i, j| {
        if i == j {
            1.0
        } else {
            (-gamma * squared_distance(x.row(i), x.row(j))).exp()
        }
    });
    Ok(KernelMatrix {
        matrix,
        provenance: Provenance::Rbf,
        params: KernelParams {
            gamma: Some(gamma),
            ..KernelParams::default()
        },
    })
}

/// `n_te × n_tr` RBF evaluations.
pub fn rbf_cross(x_train: &Matrix, x_test: &Matrix, gamma: f64) -> Result<Matrix> {
    check_gamma(gamma)?;
    if x_train.cols() != x_test.cols() {
        return Err(Error::DimensionMismatch {
            expected: x_train.cols(),
            found: x_test.cols(),
        });
    }
    Ok(Matrix::from_fn(x_test.rows(), x_train.rows(), |t, i| {
        (-gamma * squared_distance(x_test.row(t), x_train.row(i))).exp()
    }))
}

/// Test-versus-train quantum kernel through the same noise and shot model as
/// the training Gram. Entry `(t, i)` uses the cross stream `(seed, t, i)`.
pub fn quantum_cross_states(
    train: &[StateVector],
    test: &[StateVector],
    noise: &NoiseModel,
    shots: Shots,
    seed: u64,
) -> Result<Matrix> {
    let n_qubits = match (train.first(), test.first()) {
        (Some(a), Some(b)) if a.num_qubits() != b.num_qubits() => {
            return Err(Error::DimensionMismatch {
                expected: a.num_qubits(),
                found: b.num_qubits(),
            })
        }
        (Some(a), _) => a.num_qubits(),
        (None, Some(b)) => b.num_qubits(),
        (None, None) => 1,
    };
    let p = noise.effective_rate();
    let c_n = noise.mixing.value(n_qubits);
    Ok(Matrix::from_fn(test.len(), train.len(), |t, i| {
        let f = state_fidelity(&test[t], &train[i]);
        let expected = noisy_entry(f, p, c_n);
        match shots {
            Shots::Infinite => expected,
            Shots::Finite(m) => {
                sample_entry(expected, m, seed, StreamRole::CrossShots, t as u64, i as u64)
            }
        }
    }))
}

pub fn quantum_cross(
    x_train: &Matrix,
    x_test: &Matrix,
    noise: &NoiseModel,
    shots: Shots,
    seed: u64,
) -> Result<Matrix> {
    if x_train.cols() != x_test.cols() {
        return Err(Error::DimensionMismatch {
            expected: x_train.cols(),
            found: x_test.cols(),
        });
    }
    quantum_cross_states(&encode_rows(x_train)?, &encode_rows(x_test)?, noise, shots, seed)
}

/// `(Yᵀ(K + rI)⁻¹Y) / (Yᵀ(Q + rI)⁻¹Y)`.
pub fn geometric_difference(k: &SymMatrix, q: &SymMatrix, y: &[f64], ridge: f64) -> Result<f64> {
    if k.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: k.dim(),
        });
    }
    let (k_inv, _) = inv_ridge_from(&eig_sym(k)?, ridge)?;
    let (q_inv, _) = inv_ridge_from(&eig_sym(q)?, ridge)?;
    Ok(k_inv.quadratic_form(y)? / q_inv.quadratic_form(y)?)
}
