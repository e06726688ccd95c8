//! Randomized verifiers for the inequalities and formula properties the
//! library relies on. Each returns a pass flag and a one-line summary.

use anyhow::Result;
use qkernel_core::bounds::{breakdown_from, hoeffding_violation_test, noise_term, generalization_bound};
use qkernel_core::calibrate::{calibrate_and_report, Method};
use qkernel_core::datasets::{check_relabel_optimality, generate_synthetic};
use qkernel_core::kernels::{apply_noise, gram_ideal, sample_shots, MixingConstant, NoiseModel, Shots};
use qkernel_core::linalg::inverse_perturbation_check;
use qkernel_core::qsim::noise_folding_trial;
use qkernel_core::rng::{keyed_stream, uniform, StreamRole};
use qkernel_core::{CheckStatus, Matrix, SymMatrix};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub summary: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, summary: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            summary,
        }
    }
}

/// Tally of one calibration method over many kernel pairs.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LemmaTally {
    pub applicable: usize,
    pub passed: usize,
    pub not_applicable: usize,
    /// Largest `dist_after − dist_before` among applicable pairs.
    pub worst_excess: f64,
}

/// Ideal kernel and its sampled estimate for pair `k` of a lemma run.
///
/// Dimensions cycle through 2–64, qubit counts through 1–3; noise rates and
/// shot counts vary with `k`. Diagonals are pinned, so `Tr(Ŵ) = n`.
pub fn pipeline_pair(k: usize, seed: u64) -> Result<(SymMatrix, SymMatrix)> {
    let dim = 2 + k % 63;
    let qubits = 1 + k % 3;
    let p_tilde = [0.001, 0.01, 0.05][k / 3 % 3];
    let shots = [10u64, 100, 1000][k / 9 % 3];
    let pair_seed = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
    let x = generate_synthetic(dim, qubits, pair_seed)?.features;
    let x = Matrix::from_fn(x.rows(), x.cols(), |i, j| std::f64::consts::PI * x.get(i, j));
    let ideal = gram_ideal(&x)?;
    let noise = NoiseModel::new(p_tilde, NoiseModel::DEFAULT_LAYERS, MixingConstant::InverseDim)?;
    let (noisy, _) = apply_noise(&ideal, &noise, true)?;
    let w = sample_shots(&noisy, shots, pair_seed)?;
    Ok((ideal.matrix, w.matrix))
}

/// Distance inequality for clip, flip and shift on `pairs` pipeline pairs.
pub fn lemma_suite(pairs: usize, seed: u64) -> Result<Vec<(Method, LemmaTally)>> {
    let methods = [Method::Clip, Method::Flip, Method::Shift];
    let per_pair: Vec<Vec<(CheckStatus, f64)>> = (0..pairs)
        .into_par_iter()
        .map(|k| -> Result<Vec<(CheckStatus, f64)>> {
            let (q, w) = pipeline_pair(k, seed)?;
            methods
                .iter()
                .map(|&m| {
                    let (_, r) = calibrate_and_report(&q, &w, m)?;
                    Ok((r.passed_lemma, r.dist_after - r.dist_before))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let mut t = LemmaTally {
                worst_excess: f64::NEG_INFINITY,
                ..LemmaTally::default()
            };
            for row in &per_pair {
                let (status, excess) = row[mi];
                match status {
                    CheckStatus::NotApplicable => t.not_applicable += 1,
                    s => {
                        t.applicable += 1;
                        t.passed += usize::from(s.is_pass());
                        t.worst_excess = t.worst_excess.max(excess);
                    }
                }
            }
            (m, t)
        })
        .collect())
}

pub fn check_lemmas(pairs: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(lemma_suite(pairs, seed)?
        .into_iter()
        .map(|(m, t)| {
            CheckOutcome::new(
                &format!("lemma-{m}"),
                t.applicable > 0 && t.passed == t.applicable,
                format!(
                    "{}/{} applicable pairs pass, {} not applicable, worst excess {:.3e}",
                    t.passed, t.applicable, t.not_applicable, t.worst_excess
                ),
            )
        })
        .collect())
}

/// Layer-wise versus folded depolarization for every `(L, p̃)` in the grid.
pub fn check_folding(seeds: u64) -> Result<CheckOutcome> {
    let mut cases = Vec::new();
    for layers in [1usize, 2, 4, 8] {
        for p in [0.0, 0.001, 0.05, 0.3] {
            for s in 0..seeds {
                cases.push((layers, p, s));
            }
        }
    }
    let reports = cases
        .par_iter()
        .map(|&(layers, p, s)| noise_folding_trial(1 + (s % 3) as usize, layers, p, s))
        .collect::<Result<Vec<_>, _>>()?;
    let worst = reports.iter().map(|r| r.lhs).fold(0.0, f64::max);
    let failed = reports.iter().filter(|r| !r.passed()).count();
    Ok(CheckOutcome::new(
        "noise-folding",
        failed == 0,
        format!("{} trials, {failed} failures, max entry gap {worst:.3e}", reports.len()),
    ))
}

pub fn check_hoeffding(trials: u64, seed: u64) -> Result<CheckOutcome> {
    let mut worst = String::new();
    let mut failed = 0;
    let mut count = 0;
    for q in [0.1, 0.5, 0.9] {
        for m in [10u64, 100] {
            for gap in [0.1, 0.2] {
                let r = hoeffding_violation_test(q, m, gap, trials, seed)?;
                count += 1;
                if r.status != CheckStatus::Pass {
                    failed += 1;
                    worst = format!(
                        "; q={q} m={m} gap={gap}: rate {} > {:.4}",
                        r.empirical_rate,
                        r.bound + r.slack
                    );
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "hoeffding",
        failed == 0,
        format!("{count} settings x {trials} trials, {failed} failures{worst}"),
    ))
}

fn random_pd(dim: usize, rng: &mut impl rand::Rng) -> SymMatrix {
    let b: Vec<f64> = (0..dim * dim).map(|_| uniform(rng, -1.0, 1.0)).collect();
    SymMatrix::from_fn(dim, |i, j| (0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum::<f64>() / dim as f64)
        .add_identity(0.1)
}

/// Inverse perturbation inequality on `wanted` applicable random pairs.
pub fn check_inverse_perturbation(wanted: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = keyed_stream(seed, StreamRole::Synthetic, 0x1b7, 0);
    let (mut applicable, mut skipped, mut violations) = (0, 0, 0);
    let mut worst_ratio: f64 = 0.0;
    while applicable < wanted {
        let dim = 2 + (applicable + skipped) % 15;
        let a = random_pd(dim, &mut rng);
        let size = uniform(&mut rng, 0.0, 0.2);
        let e = SymMatrix::from_fn(dim, |_, _| uniform(&mut rng, -size, size));
        let Ok(r) = inverse_perturbation_check(&a, &a.add(&e)?) else {
            skipped += 1;
            continue;
        };
        match r.status {
            CheckStatus::NotApplicable => skipped += 1,
            s => {
                applicable += 1;
                if !s.is_pass() {
                    violations += 1;
                }
                if r.rhs > 0.0 {
                    worst_ratio = worst_ratio.max(r.lhs / r.rhs);
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "inverse-perturbation",
        violations == 0,
        format!("{applicable} applicable pairs ({skipped} skipped), {violations} violations, max lhs/rhs {worst_ratio:.4}"),
    ))
}

/// Breakdown consistency, monotonicity of the noise term and the noiseless
/// limit of the bound.
pub fn check_bound_properties(seed: u64) -> Result<CheckOutcome> {
    let delta = qkernel_core::bounds::DEFAULT_CONFIDENCE;
    let ns = [5usize, 10, 20, 50, 100, 150, 200];
    let ms: Vec<u64> = (0..=12).map(|k| (10f64 * 10f64.powf(k as f64 / 4.0)).round() as u64).collect();
    let ps: Vec<f64> = (0..=30).map(|k| 0.01 * k as f64).collect();
    let mut problems = Vec::new();

    for &n in &ns {
        for c_q in [1.0, 4.0, 100.0] {
            for qubits in [2usize, 8] {
                let t = breakdown_from(n, c_q, qubits);
                for &p in &ps {
                    let p_past = p > t * (1.0 + 1e-12);
                    let p_before = p < t * (1.0 - 1e-12);
                    for &m in &ms {
                        let (c2, term) = noise_term(n, Shots::Finite(m), p, qubits, c_q, delta)?;
                        if p_past && c2 != 0.0 {
                            problems.push(format!("c2={c2} at p={p} > {t} (n={n}, m={m})"));
                        }
                        if (term == f64::INFINITY) != (c2 == 0.0) {
                            problems.push(format!("term/c2 mismatch at n={n} m={m} p={p}"));
                        }
                    }
                    let (_, term) = noise_term(n, Shots::Infinite, p, qubits, c_q, delta)?;
                    if (p_past && term.is_finite()) || (p_before && !term.is_finite()) {
                        problems.push(format!("unlimited shots not sharp at p={p}, threshold {t}"));
                    }
                }
            }
        }
    }

    for c_q in [1.0, 3.0] {
        let term = |n: usize, m: u64, p: f64| noise_term(n, Shots::Finite(m), p, 2, c_q, delta).map(|r| r.1);
        for &n in &ns {
            for &p in &ps {
                for w in ms.windows(2) {
                    if term(n, w[1], p)? > term(n, w[0], p)? {
                        problems.push(format!("increases in m at n={n} p={p} m={}", w[1]));
                    }
                }
            }
            for &m in &ms {
                for w in ps.windows(2) {
                    if term(n, m, w[1])? < term(n, m, w[0])? {
                        problems.push(format!("decreases in p at n={n} m={m} p={}", w[1]));
                    }
                }
            }
        }
        for &m in &ms {
            for &p in &ps {
                for w in ns.windows(2) {
                    if term(w[1], m, p)? < term(w[0], m, p)? {
                        problems.push(format!("decreases in n at m={m} p={p} n={}", w[1]));
                    }
                }
            }
        }
    }

    let mut rng = keyed_stream(seed, StreamRole::Synthetic, 0xb0, 0);
    for dim in [2usize, 5, 10, 30] {
        let q = random_pd(dim, &mut rng);
        let y: Vec<f64> = (0..dim).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let r = generalization_bound(&q, &y, Shots::Infinite, &NoiseModel::noiseless(), 2, delta)?;
        if r.term_noise != 0.0 || r.term_ideal != (r.c1 / dim as f64).sqrt() {
            problems.push(format!("noiseless limit at dim {dim}: noise term {}", r.term_noise));
        }
    }

    let passed = problems.is_empty();
    let summary = if passed {
        "breakdown, monotonicity and noiseless-limit checks hold".to_string()
    } else {
        format!("{} problems, first: {}", problems.len(), problems[0])
    };
    Ok(CheckOutcome::new("bound-properties", passed, summary))
}

/// Relabeling scores versus random directions on positive-definite pairs.
pub fn check_relabel(instances: u64, directions: usize, seed: u64) -> Result<CheckOutcome> {
    let reports = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = keyed_stream(seed, StreamRole::Synthetic, 0x7e1, k);
            let q = random_pd(8, &mut rng);
            let c = random_pd(8, &mut rng);
            check_relabel_optimality(&q, &c, 0.0, directions, seed.wrapping_add(k))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let tightest = reports.iter().map(|r| r.rhs - r.lhs).fold(f64::INFINITY, f64::min);
    Ok(CheckOutcome::new(
        "relabel-optimality",
        failed == 0,
        format!("{instances} instances x {directions} directions, {failed} failures, smallest margin {tightest:.3e}"),
    ))
}

/// Names accepted by [`run_named`].
pub const CHECK_NAMES: [&str; 6] = ["lemmas", "folding", "hoeffding", "perturbation", "bounds", "relabel"];

pub fn run_named(name: &str, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(match name {
        "lemmas" => check_lemmas(1000, seed)?,
        "folding" => vec![check_folding(20)?],
        "hoeffding" => vec![check_hoeffding(10_000, seed)?],
        "perturbation" => vec![check_inverse_perturbation(1000, seed)?],
        "bounds" => vec![check_bound_properties(seed)?],
        "relabel" => vec![check_relabel(100, 10_000, seed)?],
        "all" => {
            let mut out = Vec::new();
            for n in CHECK_NAMES {
                out.extend(run_named(n, seed)?);
            }
            out
        }
        other => anyhow::bail!("unknown check {other:?}; expected one of {CHECK_NAMES:?} or all"),
    })
}
