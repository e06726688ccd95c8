use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qkernel::checks;
use qkernel::config::{ConfigError, FeatureConfig, Format, SweepConfig};
use qkernel::io;
use qkernel::real::json_real;
use qkernel::record::{emit_results, format_for};
use qkernel::sweep::{preprocess, run_sweep};
use qkernel_core::bounds::{saturation_diagnostic, generalization_bound};
use qkernel_core::calibrate::{apply, calibrate_and_report, Method};
use qkernel_core::datasets::{relabel_for_advantage, Dataset, RelabelForm};
use qkernel_core::kernels::{
    apply_noise, estimate, gram_ideal, rbf_gram, KernelMatrix, MixingConstant, NoiseModel, Shots,
};
use qkernel_core::learner::{accuracy, fit_kernel, predict, pooled_variance, DEFAULT_QUANTUM_RIDGE};
use serde_json::json;

/// Environment variable that caps the worker thread count.
const THREADS_VAR: &str = "QKERNEL_THREADS";

#[derive(Parser)]
#[command(name = "qkernel", version, about = "Noisy quantum kernel simulation and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Quantum,
    Rbf,
}

#[derive(Subcommand)]
enum Command {
    /// Build a Gram matrix from a dataset and save it with a JSON sidecar.
    Kernel {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "quantum")]
        kind: KernelKind,
        /// Reduce features to this many principal components first.
        #[arg(long)]
        pca: Option<usize>,
        /// RBF bandwidth; defaults to 1/(d·Var).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        p_tilde: f64,
        #[arg(long, default_value_t = NoiseModel::DEFAULT_LAYERS)]
        layers: u32,
        #[arg(long, value_parser = parse_mixing, default_value = "inverse_dim")]
        mixing: MixingConstant,
        #[arg(long, default_value = "inf")]
        shots: Shots,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep sampled diagonal entries instead of pinning them to 1.
        #[arg(long)]
        no_fix_diagonal: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair an indefinite kernel; with a reference, report distances.
    Calibrate {
        #[arg(long)]
        kernel: PathBuf,
        /// clip, flip, shift or nearest:<delta>
        #[arg(long)]
        method: Method,
        /// Ideal kernel to measure Frobenius distances against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit kernel ridge regression and report accuracies.
    Train {
        /// Training Gram matrix.
        #[arg(long)]
        kernel: PathBuf,
        /// Training labels (dataset CSV, rows aligned with the kernel).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_QUANTUM_RIDGE)]
        ridge: f64,
        /// Test-versus-train kernel, n_test × n.
        #[arg(long, requires = "test")]
        cross: Option<PathBuf>,
        /// Test labels.
        #[arg(long, requires = "cross")]
        test: Option<PathBuf>,
        /// Save the fitted model as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace labels with ones that favour the quantum kernel.
    Relabel {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        qubits: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma_scale: f64,
        #[arg(long, default_value_t = 1e-3)]
        ridge: f64,
        #[arg(long, value_parser = parse_form, default_value = "inverse_classical")]
        form: RelabelForm,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        no_standardize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the generalization-bound terms for a kernel and labels.
    Bound {
        /// Ideal Gram matrix.
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "inf")]
        shots: Shots,
        #[arg(long, default_value_t = 0.0)]
        p_tilde: f64,
        #[arg(long, default_value_t = NoiseModel::DEFAULT_LAYERS)]
        layers: u32,
        /// Qubit count; read from the kernel sidecar when omitted.
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long, default_value_t = qkernel_core::bounds::DEFAULT_CONFIDENCE)]
        delta: f64,
        /// Ridge added to the kernel before inversion.
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Sampled kernel for the inverse-saturation diagnostic.
        #[arg(long)]
        sampled: Option<PathBuf>,
    },
    /// Run randomized verifiers: lemmas, folding, hoeffding, perturbation,
    /// bounds, relabel or all.
    Check {
        #[arg(default_value = "all")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a configured parameter sweep and write one record per coordinate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn parse_mixing(s: &str) -> Result<MixingConstant, String> {
    serde_json::from_value(json!(s)).map_err(|_| "expected inverse_dim or half_inverse_dim".to_string())
}

fn parse_form(s: &str) -> Result<RelabelForm, String> {
    serde_json::from_value(json!(s)).map_err(|_| "expected inverse_classical or literal_classical".to_string())
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError::Invalid(msg.into()).into()
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn features_for(ds: &Dataset, pca: Option<usize>) -> Result<qkernel_core::Matrix> {
    match pca {
        None => Ok(ds.features.clone()),
        Some(n) => Ok(qkernel_core::datasets::pca(&ds.features, n)?.scores),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_kernel(
    data: &Path,
    kind: KernelKind,
    pca: Option<usize>,
    gamma: Option<f64>,
    noise: NoiseModel,
    shots: Shots,
    seed: u64,
    fix_diagonal: bool,
    out: &Path,
) -> Result<()> {
    let ds = io::read_dataset(data)?;
    let x = features_for(&ds, pca)?;
    let k: KernelMatrix = match kind {
        KernelKind::Rbf => {
            let g = match gamma {
                Some(g) => g,
                None => 1.0 / (x.cols() as f64 * pooled_variance(&x)?),
            };
            rbf_gram(&x, g)?
        }
        KernelKind::Quantum => {
            let ideal = gram_ideal(&x)?;
            if noise.p_tilde == 0.0 && shots == Shots::Infinite {
                ideal
            } else {
                let (noisy, _) = apply_noise(&ideal, &noise, fix_diagonal)?;
                estimate(&noisy, shots, seed)?
            }
        }
    };
    io::write_kernel(out, &k)?;
    eprintln!("wrote {}x{} {} kernel to {}", k.dim(), k.dim(), k.provenance.name(), out.display());
    Ok(())
}

fn cmd_calibrate(kernel: &Path, method: Method, reference: Option<&Path>, out: &Path) -> Result<()> {
    let w = io::read_sym_matrix(kernel)?;
    let calibrated = match reference {
        Some(r) => {
            let q = io::read_sym_matrix(r)?;
            let (c, report) = calibrate_and_report(&q, &w, method)?;
            print_json(&json!({
                "method": method.to_string(),
                "dist_before": json_real(report.dist_before),
                "dist_after": json_real(report.dist_after),
                "min_eig_before": json_real(report.min_eig_before),
                "min_eig_after": json_real(report.min_eig_after),
                "passed_lemma": report.passed_lemma,
            }))?;
            c
        }
        None => apply(&w, method)?,
    };
    let meta = json!({
        "rows": calibrated.dim(),
        "cols": calibrated.dim(),
        "provenance": {"kind": "calibrated", "method": method},
        "source": kernel,
    });
    io::write_matrix(out, &calibrated.to_matrix(), Some(&meta))
}

fn cmd_train(
    kernel: &Path,
    data: &Path,
    ridge: f64,
    cross: Option<&Path>,
    test: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let k = match io::read_kernel(kernel) {
        Ok(k) => k,
        Err(_) => KernelMatrix {
            matrix: io::read_sym_matrix(kernel)?,
            provenance: qkernel_core::kernels::Provenance::Ideal,
            params: Default::default(),
        },
    };
    let ds = io::read_dataset(data)?;
    let model = fit_kernel(&k, &ds.labels, ridge)?;
    let (_, train_labels) = predict(&model, &k.matrix.to_matrix())?;
    let mut report = json!({
        "n": ds.len(),
        "ridge": ridge,
        "train_accuracy": accuracy(&train_labels, &ds.labels)?,
        "relative_residual": json_real(model.relative_residual),
    });
    if let (Some(cross), Some(test)) = (cross, test) {
        let kc = io::read_matrix(cross)?;
        let ts = io::read_dataset(test)?;
        let (_, labels) = predict(&model, &kc)?;
        report["test_accuracy"] = json!(accuracy(&labels, &ts.labels)?);
    }
    if let Some(out) = out {
        io::write_json(out, &serde_json::to_value(&model)?)?;
    }
    print_json(&report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_relabel(
    data: &Path,
    qubits: usize,
    gamma_scale: f64,
    ridge: f64,
    form: RelabelForm,
    features: FeatureConfig,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ds = io::read_dataset(data)?;
    let cfg = SweepConfig {
        num_qubits: qubits,
        features,
        ..SweepConfig::from_json(&format!(
            r#"{{"dataset": {{"synthetic": {{"dim": {qubits}}}}}, "num_qubits": {qubits},
               "n_list": [2], "n_test": 1, "m_list": ["inf"], "p_tilde_list": [0], "seeds": [{seed}]}}"#
        ))?
    };
    let x = preprocess(&ds.features, &cfg)?;
    let q = gram_ideal(&x)?.matrix;
    let gamma = gamma_scale / (qubits as f64 * pooled_variance(&x)?);
    let k = rbf_gram(&x, gamma)?.matrix;
    let relabel = relabel_for_advantage(&q, &k, ridge, form)?;
    let out_ds = Dataset::new(x, relabel.labels)?;
    let meta = json!({
        "seed": seed,
        "provenance": "relabeled",
        "source": data,
        "relabel": {
            "form": form,
            "ridge": ridge,
            "gamma": gamma,
            "top_eigenvalue": json_real(relabel.top_eigenvalue),
        },
        "features": {"standardize": cfg.features.standardize, "scale": cfg.features.scale, "qubits": qubits},
    });
    io::write_dataset(out, &out_ds, Some(&meta))?;
    eprintln!("wrote {} relabeled rows to {}", out_ds.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    kernel: &Path,
    data: &Path,
    shots: Shots,
    noise: NoiseModel,
    qubits: Option<usize>,
    delta: f64,
    ridge: f64,
    sampled: Option<&Path>,
) -> Result<()> {
    let q = io::read_sym_matrix(kernel)?;
    let qubits = match qubits {
        Some(n) => n,
        None => io::read_sidecar(kernel)?
            .and_then(|m| m["params"]["num_qubits"].as_u64())
            .map(|n| n as usize)
            .ok_or_else(|| invalid("--qubits is required when the kernel has no sidecar"))?,
    };
    let ds = io::read_dataset(data)?;
    let r = generalization_bound(&q.add_identity(ridge), &ds.labels, shots, &noise, qubits, delta)?;
    let mut report = json!({
        "n": r.n,
        "m": r.m,
        "num_qubits": r.num_qubits,
        "p": json_real(r.p),
        "delta": r.delta,
        "c1": json_real(r.c1),
        "c_q": json_real(r.c_q),
        "c2": json_real(r.c2),
        "term_ideal": json_real(r.term_ideal),
        "term_noise": json_real(r.term_noise),
        "breakdown_p": json_real(r.breakdown_p),
    });
    if let Some(path) = sampled {
        let w = io::read_sym_matrix(path)?;
        let s = saturation_diagnostic(&q, &w, ridge)?;
        report["saturation"] = json!({
            "s2": json_real(s.s2),
            "s_f": json_real(s.s_f),
            "sqrt_s2": json_real(s.sqrt_s2),
            "mean_abs_deviation": json_real(s.mean_abs_deviation),
            "sqrt_root_n_eps": json_real(s.sqrt_root_n_eps),
            "lower_bound_holds": s.check.status,
        });
    }
    print_json(&report)
}

fn cmd_check(name: &str, seed: u64) -> Result<bool> {
    if name != "all" && !checks::CHECK_NAMES.contains(&name) {
        return Err(invalid(format!("unknown check {name:?}; expected one of {:?} or all", checks::CHECK_NAMES)));
    }
    let outcomes = checks::run_named(name, seed)?;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.summary);
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

/// Writes every record, then reports `false` if any record carries an error.
fn cmd_sweep(config: &Path, seed: Option<u64>, out: Option<PathBuf>, format: Option<Format>) -> Result<bool> {
    let mut cfg = SweepConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let out = out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| invalid("no output path: pass --out or set output in the config"))?;
    let format = format
        .or(cfg.format)
        .or_else(|| format_for(&out))
        .unwrap_or_default();
    let records = run_sweep(&cfg);
    emit_results(&records, &out, format)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    eprintln!("wrote {} records to {} ({failed} with errors)", records.len(), out.display());
    Ok(failed == 0)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn noise_model(p_tilde: f64, layers: u32, mixing: MixingConstant) -> Result<NoiseModel> {
    NoiseModel::new(p_tilde, layers, mixing).map_err(|e| invalid(e.to_string()))
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Kernel {
            data,
            kind,
            pca,
            gamma,
            p_tilde,
            layers,
            mixing,
            shots,
            seed,
            no_fix_diagonal,
            out,
        } => {
            let noise = noise_model(p_tilde, layers, mixing)?;
            cmd_kernel(&data, kind, pca, gamma, noise, shots, seed, !no_fix_diagonal, &out)?;
        }
        Command::Calibrate {
            kernel,
            method,
            reference,
            out,
        } => cmd_calibrate(&kernel, method, reference.as_deref(), &out)?,
        Command::Train {
            kernel,
            data,
            ridge,
            cross,
            test,
            out,
        } => cmd_train(&kernel, &data, ridge, cross.as_deref(), test.as_deref(), out.as_deref())?,
        Command::Relabel {
            data,
            qubits,
            gamma_scale,
            ridge,
            form,
            scale,
            no_standardize,
            seed,
            out,
        } => {
            let features = FeatureConfig {
                standardize: !no_standardize,
                scale,
            };
            cmd_relabel(&data, qubits, gamma_scale, ridge, form, features, seed, &out)?;
        }
        Command::Bound {
            kernel,
            data,
            shots,
            p_tilde,
            layers,
            qubits,
            delta,
            ridge,
            sampled,
        } => {
            let noise = noise_model(p_tilde, layers, MixingConstant::InverseDim)?;
            cmd_bound(&kernel, &data, shots, noise, qubits, delta, ridge, sampled.as_deref())?;
        }
        Command::Check { name, seed } => return cmd_check(&name, seed),
        Command::Sweep {
            config,
            seed,
            out,
            format,
        } => return cmd_sweep(&config, seed, out, format),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
