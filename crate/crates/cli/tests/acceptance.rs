//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix};
use qkernel::checks::{self, CheckOutcome};
use qkernel::config::SweepConfig;
use qkernel::record::{RecordKind, ResultRecord};
use qkernel::sweep::run_sweep;
use qkernel_core::datasets::median;
use qkernel_core::kernels::{gram_ideal, Shots};
use qkernel_core::rng::{keyed_stream, uniform, StreamRole};
use qkernel_core::Matrix;

const SEED: u64 = 20_240_601;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }

    fn from_checks(outcomes: &[CheckOutcome], elapsed: Duration, limit: Option<Duration>) -> Self {
        let mut passed = outcomes.iter().all(|o| o.passed);
        let mut parts: Vec<String> = outcomes
            .iter()
            .map(|o| format!("{} {}: {}", if o.passed { "ok" } else { "FAILED" }, o.name, o.summary))
            .collect();
        if let Some(limit) = limit {
            passed &= elapsed <= limit;
            parts.push(format!("{:.1}s of {}s budget", elapsed.as_secs_f64(), limit.as_secs()));
        }
        Verdict::new(passed, parts.join("; "))
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_config(name: &str) -> SweepConfig {
    let path = workspace_root().join("configs").join(name);
    SweepConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn lemma_suite() -> Verdict {
    let (outcomes, elapsed) = timed(|| checks::check_lemmas(1000, SEED));
    match outcomes {
        Ok(o) => Verdict::from_checks(&o, elapsed, Some(Duration::from_secs(60))),
        Err(e) => Verdict::new(false, format!("error: {e:#}")),
    }
}

/// Dense density-matrix construction of the encoded state, built from
/// explicit Kronecker products of single-qubit gates.
fn oracle_density(x: &[f64]) -> DMatrix<Complex<f64>> {
    let n = x.len();
    let dim = 1usize << n;
    let one = Complex::new(1.0, 0.0);
    let zero = Complex::new(0.0, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h1 = DMatrix::from_row_slice(2, 2, &[one * s, one * s, one * s, -one * s]);
    let z1 = DMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]);
    let id1 = DMatrix::<Complex<f64>>::identity(2, 2);
    // Qubit j is bit j of the basis index, so it sits at kron position n-1-j.
    let embed = |op: &DMatrix<Complex<f64>>, qubit: usize| {
        let mut m = DMatrix::<Complex<f64>>::identity(1, 1);
        for pos in (0..n).rev() {
            let f = if pos == qubit { op } else { &id1 };
            m = m.kronecker(f);
        }
        m
    };
    let mut h = DMatrix::<Complex<f64>>::identity(1, 1);
    for _ in 0..n {
        h = h.kronecker(&h1);
    }
    let zs: Vec<_> = (0..n).map(|j| embed(&z1, j)).collect();
    let mut gen = DMatrix::<Complex<f64>>::zeros(dim, dim);
    for j in 0..n {
        gen += &zs[j] * Complex::new(x[j], 0.0);
        for k in j + 1..n {
            gen += (&zs[j] * &zs[k]) * Complex::new(x[j] * x[k], 0.0);
        }
    }
    // The generator is diagonal, so its exponential acts entrywise there.
    let u = DMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            Complex::new(0.0, gen[(r, r)].re).exp()
        } else {
            zero
        }
    });
    let mut psi = DMatrix::<Complex<f64>>::zeros(dim, 1);
    psi[(0, 0)] = one;
    let psi = &u * &h * &u * &h * psi;
    &psi * psi.adjoint()
}

fn simulator_oracle() -> Verdict {
    let (result, elapsed) = timed(|| {
        let mut worst: f64 = 0.0;
        for k in 0..50u64 {
            let mut rng = keyed_stream(SEED, StreamRole::Synthetic, 0x0a, k);
            let qubits = 1 + (k % 3) as usize;
            let rows = 3 + (k % 6) as usize;
            let x = Matrix::from_fn(rows, qubits, |_, _| uniform(&mut rng, -3.0, 3.0));
            let q = gram_ideal(&x).expect("gram").matrix;
            let rhos: Vec<_> = (0..rows).map(|i| oracle_density(x.row(i))).collect();
            for i in 0..rows {
                for j in 0..rows {
                    let t = (&rhos[i] * &rhos[j]).trace();
                    worst = worst.max((q.get(i, j) - t.re).abs()).max(t.im.abs());
                }
            }
        }
        worst
    });
    let passed = result <= 1e-10 && elapsed <= Duration::from_secs(30);
    Verdict::new(
        passed,
        format!("50 datasets, max |Q - Tr(rho_i rho_j)| = {result:.3e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn single_check(outcome: anyhow::Result<CheckOutcome>) -> Verdict {
    match outcome {
        Ok(o) => Verdict::from_checks(&[o], Duration::ZERO, None),
        Err(e) => Verdict::new(false, format!("error: {e:#}")),
    }
}

type Medians = BTreeMap<(usize, Option<Shots>, u64, Option<String>), f64>;

/// Median test accuracy of quantum records keyed by `(n, m, p̃ bits, method)`.
fn quantum_medians(records: &[ResultRecord]) -> Medians {
    let mut groups: BTreeMap<_, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::Quantum) {
        if let Some(a) = r.test_accuracy {
            let key = (r.n, r.m, r.p_tilde.unwrap_or(f64::NAN).to_bits(), r.method.clone());
            groups.entry(key).or_default().push(a);
        }
    }
    groups.into_iter().map(|(k, v)| (k, median(&v).expect("nonempty"))).collect()
}

fn rbf_median(records: &[ResultRecord], n: usize) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Rbf && r.n == n)
        .filter_map(|r| r.test_accuracy)
        .collect();
    median(&v).ok()
}

fn errors(records: &[ResultRecord]) -> usize {
    records.iter().filter(|r| r.error.is_some()).count()
}

fn training_size_behaviour() -> Verdict {
    let cfg = load_config("training_size_sweep.json");
    let (records, elapsed) = timed(|| run_sweep(&cfg));
    let med = quantum_medians(&records);
    let get = |n: usize, m: Shots, p: f64| {
        med.get(&(n, Some(m), p.to_bits(), Some("nearest".to_string())))
            .copied()
            .unwrap_or(f64::NAN)
    };
    let ns = [5usize, 50, 100, 200];

    let ideal_100 = get(100, Shots::Infinite, 0.0);
    let rbf_100 = rbf_median(&records, 100).unwrap_or(f64::NAN);
    let a = ideal_100 - rbf_100 >= 0.05;

    let m10 = get(100, Shots::Finite(10), 0.05);
    let m1000 = get(100, Shots::Finite(1000), 0.05);
    let b = m1000 - m10 >= 0.10;

    let noisy: Vec<f64> = ns.iter().map(|&n| get(n, Shots::Finite(100), 0.05)).collect();
    let ideal: Vec<f64> = ns.iter().map(|&n| get(n, Shots::Infinite, 0.0)).collect();
    let peak_before_end = noisy[..3].iter().any(|&v| v > noisy[3]);
    let ideal_nondecreasing = ideal.windows(2).all(|w| w[1] >= w[0]);
    let c = peak_before_end && ideal_nondecreasing;

    let in_time = elapsed <= Duration::from_secs(600);
    let clean = errors(&records) == 0;
    Verdict::new(
        a && b && c && in_time && clean,
        format!(
            "(a) ideal {ideal_100:.3} vs rbf {rbf_100:.3} at n=100 [{}]; \
             (b) m=1000 {m1000:.3} vs m=10 {m10:.3} [{}]; \
             (c) noisy m=100 over n {noisy:?}, ideal {ideal:?} [{}]; \
             {} record errors; {:.1}s",
            ok(a),
            ok(b),
            ok(c),
            errors(&records),
            elapsed.as_secs_f64()
        ),
    )
}

fn calibration_benefit() -> Verdict {
    let cfg = load_config("calibration_sweep.json");
    let (records, elapsed) = timed(|| run_sweep(&cfg));
    let med = quantum_medians(&records);
    let n = cfg.n_list[0];
    let p = cfg.p_tilde_list[0];
    let get = |method: &str| {
        med.get(&(n, Some(Shots::Finite(10)), p.to_bits(), Some(method.to_string())))
            .copied()
            .unwrap_or(f64::NAN)
    };
    let nearest = get("nearest");
    let gains: Vec<(&str, f64)> = ["clip", "flip", "shift"].iter().map(|&m| (m, get(m) - nearest)).collect();
    let shift_ok = get("shift") >= nearest;
    let gain_ok = gains.iter().any(|&(_, g)| g >= 0.03);
    Verdict::new(
        shift_ok && gain_ok && errors(&records) == 0,
        format!(
            "n={n}, p_tilde={p}, m=10: nearest median {nearest:.3}; gains {}; {} record errors; {:.1}s",
            gains
                .iter()
                .map(|(m, g)| format!("{m} {:+.1}pp", 100.0 * g))
                .collect::<Vec<_>>()
                .join(", "),
            errors(&records),
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{
            "dataset": {"synthetic": {"dim": 4}},
            "num_qubits": 3,
            "n_list": [10, 20],
            "n_test": 15,
            "m_list": [10, 100, "inf"],
            "p_tilde_list": [0.0, 0.01],
            "methods": ["nearest", "clip", "shift"],
            "seeds": [1, 2, 3]
        }"#,
    )
    .expect("write config");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let result = Command::new(env!("CARGO_BIN_EXE_qkernel"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .expect("spawn qkernel");
        (result.status.success(), std::fs::read(&out).unwrap_or_default())
    };
    let (ok_a, a) = run("a.csv");
    let (ok_b, b) = run("b.csv");
    Verdict::new(
        ok_a && ok_b && !a.is_empty() && a == b,
        format!("two runs, {} and {} bytes, identical: {}", a.len(), b.len(), a == b),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 calibration distance inequalities", lemma_suite),
        ("2 simulator vs density-matrix oracle", simulator_oracle),
        ("3 depolarization folding", || single_check(checks::check_folding(20))),
        ("4 shot concentration", || single_check(checks::check_hoeffding(10_000, SEED))),
        ("5 inverse perturbation", || single_check(checks::check_inverse_perturbation(1000, SEED))),
        ("6 bound formula properties", || single_check(checks::check_bound_properties(SEED))),
        ("7 training-size and shot behaviour", training_size_behaviour),
        ("8 calibration benefit at m=10", calibration_benefit),
        ("9 relabel optimality", || single_check(checks::check_relabel(100, 10_000, SEED))),
        ("10 sweep determinism", determinism),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let v = run();
        if !v.passed {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {failures} failing criteria");
    if failures > 0 {
        std::process::exit(1);
    }
}
