//! Statevector simulation of the data-encoding circuit
//! `U_Z(x)·H^⊗N·U_Z(x)·H^⊗N|0…0⟩`, plus a small density-matrix simulator
//! used to verify depolarization identities on up to three qubits.
//!
//! Basis index bit `j` is qubit `j`; the Pauli-Z eigenvalue of qubit `j` in
//! basis state `b` is `z_j = 1 − 2·b_j`. The diagonal layer applies
//! `exp(i·(Σ_j x_j z_j + Σ_{j<k} x_j x_k z_j z_k))`.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::check::{CheckReport, CheckStatus};
use crate::error::{invalid, Error, Result};
use crate::rng::{keyed_stream, uniform, StreamRole};
#[allow(unused_imports)]
use num_traits::Float;

pub const MAX_QUBITS: usize = 14;
/// Density matrices are only materialized on the verification path.
pub const MAX_DENSITY_QUBITS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_qubits(num_qubits, MAX_QUBITS)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `H^⊗N` as an in-place fast Walsh–Hadamard transform.
    pub fn apply_hadamard_all(&mut self) {
        let dim = self.amplitudes.len();
        let mut half = 1;
        while half < dim {
            for block in (0..dim).step_by(2 * half) {
                for k in block..block + half {
                    let a = self.amplitudes[k];
                    let b = self.amplitudes[k + half];
                    self.amplitudes[k] = a + b;
                    self.amplitudes[k + half] = a - b;
                }
            }
            half <<= 1;
        }
        let scale = 1.0 / (dim as f64).sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
    }

    /// Multiplies each amplitude by the matching unit-modulus phase.
    pub fn apply_phases(&mut self, phases: &[Complex64]) {
        for (a, p) in self.amplitudes.iter_mut().zip(phases) {
            *a *= p;
        }
    }
}

fn check_qubits(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(invalid(alloc::format!(
            "qubit count {n} outside supported range 1..={max}"
        )));
    }
    Ok(())
}

/// Phase angle `Σ_j x_j z_j + Σ_{j<k} x_j x_k z_j z_k` of basis state `b`.
pub fn zz_angle(x: &[f64], basis: usize) -> f64 {
    let z = |j: usize| if (basis >> j) & 1 == 0 { 1.0 } else { -1.0 };
    let mut angle = 0.0;
    for j in 0..x.len() {
        let zj = z(j);
        angle += x[j] * zj;
        for k in j + 1..x.len() {
            angle += x[j] * x[k] * zj * z(k);
        }
    }
    angle
}

/// Diagonal of `U_Z(x)`.
pub fn zz_phases(x: &[f64]) -> Vec<Complex64> {
    (0..1usize << x.len())
        .map(|b| {
            let (s, c) = zz_angle(x, b).sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}

/// Encoded state `|φ(x)⟩` on `x.len()` qubits.
pub fn feature_state(x: &[f64]) -> Result<StateVector> {
    check_qubits(x.len(), MAX_QUBITS)?;
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(invalid(alloc::format!("feature {k} is not finite")));
    }
    let phases = zz_phases(x);
    let mut state = StateVector::zero(x.len())?;
    state.apply_hadamard_all();
    state.apply_phases(&phases);
    state.apply_hadamard_all();
    state.apply_phases(&phases);
    Ok(state)
}

/// Squared overlap of two already prepared states, clamped to `[0, 1]`.
pub fn state_fidelity(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm_sqr().clamp(0.0, 1.0)
}

/// `|⟨φ(x2)|φ(x1)⟩|²`.
pub fn fidelity(x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            found: x2.len(),
        });
    }
    Ok(state_fidelity(&feature_state(x1)?, &feature_state(x2)?))
}

/// Dense complex square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(ComplexMatrix { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        ComplexMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let n = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        ComplexMatrix { dim: n, data }
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let n = self.dim;
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(self.get(j, i).conj());
            }
        }
        ComplexMatrix { dim: n, data }
    }

    /// `max |U†U − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint().matmul(self);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.get(i, j) - Complex64::new(t, 0.0)).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Random unitary from Gram–Schmidt on a matrix with entries uniform in the
/// unit square. Not Haar distributed, which the verifiers do not need.
pub fn random_unitary(dim: usize, seed: u64, index: u64) -> ComplexMatrix {
    let mut rng = keyed_stream(seed, StreamRole::Unitary, dim as u64, index);
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)))
            .collect();
        // Two Gram–Schmidt passes keep the columns orthogonal to rounding.
        for _ in 0..2 {
            for c in &cols {
                let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        for a in &mut v {
            *a /= norm;
        }
        cols.push(v);
    }
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (j, c) in cols.iter().enumerate() {
        for (i, &a) in c.iter().enumerate() {
            data[i * dim + j] = a;
        }
    }
    ComplexMatrix { dim, data }
}

/// Mixed state on at most [`MAX_DENSITY_QUBITS`] qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: ComplexMatrix,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|`.
    pub fn from_state(state: &StateVector) -> Result<Self> {
        check_qubits(state.num_qubits, MAX_DENSITY_QUBITS)?;
        let amps = &state.amplitudes;
        let dim = amps.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in amps {
            for b in amps {
                data.push(a * b.conj());
            }
        }
        Ok(DensityMatrix {
            rho: ComplexMatrix { dim, data },
        })
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        let dim = rho.dim;
        if dim < 2 || !dim.is_power_of_two() || dim > 1 << MAX_DENSITY_QUBITS {
            return Err(invalid("density matrix dimension must be 2, 4 or 8"));
        }
        let herm = rho.max_abs_diff(&rho.adjoint());
        if herm > 1e-12 {
            return Err(invalid("density matrix is not Hermitian"));
        }
        let trace: f64 = (0..dim).map(|i| rho.get(i, i).re).sum();
        if (trace - 1.0).abs() > 1e-12 {
            return Err(invalid("density matrix trace differs from 1"));
        }
        let dm = DensityMatrix { rho };
        let lmin = dm.min_eigenvalue()?;
        if lmin < -1e-10 {
            return Err(Error::NotPsd {
                min_eigenvalue: lmin,
            });
        }
        Ok(dm)
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        check_qubits(num_qubits, MAX_DENSITY_QUBITS)?;
        let dim = 1 << num_qubits;
        let mut rho = ComplexMatrix::identity(dim);
        for a in &mut rho.data {
            *a /= dim as f64;
        }
        Ok(DensityMatrix { rho })
    }

    pub fn dim(&self) -> usize {
        self.rho.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.rho.get(i, i).re).sum()
    }

    /// `Re Tr(ρσ)`.
    pub fn trace_product(&self, other: &DensityMatrix) -> f64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.rho.get(i, k) * other.rho.get(k, i);
            }
        }
        acc.re
    }

    /// `UρU†`.
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<DensityMatrix> {
        if u.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.dim,
            });
        }
        Ok(DensityMatrix {
            rho: u.matmul(&self.rho).matmul(&u.adjoint()),
        })
    }

    /// Smallest eigenvalue via the real symmetric embedding
    /// `[[Re, −Im], [Im, Re]]`, whose spectrum doubles that of `ρ`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let n = self.dim();
        let emb = crate::linalg::SymMatrix::from_fn(2 * n, |i, j| {
            let (bi, ri) = (i / n, i % n);
            let (bj, rj) = (j / n, j % n);
            let z = self.rho.get(ri, rj);
            match (bi, bj) {
                (0, 0) | (1, 1) => z.re,
                (0, 1) => -z.im,
                _ => z.im,
            }
        });
        Ok(crate::linalg::eig_sym(&emb)?.min_eigenvalue())
    }
}

/// `N_p(ρ) = (1 − p)·ρ + p·I/2^N`.
pub fn depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("depolarization rate must lie in [0, 1]"));
    }
    let dim = rho.dim();
    let mut out = rho.clone();
    for a in &mut out.rho.data {
        *a *= 1.0 - p;
    }
    for i in 0..dim {
        out.rho.data[i * dim + i] += p / dim as f64;
    }
    Ok(out)
}

/// Folded rate `1 − (1 − p̃)^L` of `L` layers with per-layer rate `p̃`.
pub fn folded_rate(p_tilde: f64, layers: u32) -> f64 {
    1.0 - (1.0 - p_tilde).powi(layers as i32)
}

/// Compares layer-wise noisy evolution against one depolarization of the
/// composite unitary with the folded rate. `lhs` is the max-entry gap.
pub fn verify_noise_folding(
    unitaries: &[ComplexMatrix],
    p_tilde: f64,
    initial: &DensityMatrix,
) -> Result<CheckReport> {
    if unitaries.is_empty() {
        return Err(invalid("at least one layer is required"));
    }
    if !(0.0..=1.0).contains(&p_tilde) {
        return Err(invalid("depolarization rate must lie in [0, 1]"));
    }
    let mut composite = ComplexMatrix::identity(initial.dim());
    let mut layered = initial.clone();
    for u in unitaries {
        let dev = u.unitarity_error();
        if dev > 1e-10 {
            return Err(Error::NotUnitary { deviation: dev });
        }
        layered = depolarize(&layered.evolve(u)?, p_tilde)?;
        composite = u.matmul(&composite);
    }
    let p = folded_rate(p_tilde, unitaries.len() as u32);
    let folded = depolarize(&initial.evolve(&composite)?, p)?;
    let gap = layered.rho.max_abs_diff(&folded.rho);
    Ok(CheckReport {
        lhs: gap,
        rhs: 1e-10,
        status: CheckStatus::from_bool(gap <= 1e-10),
    })
}

/// One seeded noise-folding trial: `layers` random unitaries on
/// `num_qubits` qubits acting on a random pure input state.
pub fn noise_folding_trial(
    num_qubits: usize,
    layers: usize,
    p_tilde: f64,
    seed: u64,
) -> Result<CheckReport> {
    check_qubits(num_qubits, MAX_DENSITY_QUBITS)?;
    let dim = 1 << num_qubits;
    let unitaries: Vec<ComplexMatrix> = (0..layers as u64)
        .map(|l| random_unitary(dim, seed, l + 1))
        .collect();
    let prep = random_unitary(dim, seed, 0);
    let amplitudes: Vec<Complex64> = (0..dim).map(|i| prep.get(i, 0)).collect();
    let state = StateVector {
        num_qubits,
        amplitudes,
    };
    let initial = DensityMatrix::from_state(&state)?;
    verify_noise_folding(&unitaries, p_tilde, &initial)
}
