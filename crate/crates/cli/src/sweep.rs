//! Cartesian experiment sweeps over training size, shots, noise and
//! calibration method.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use qkernel_core::bounds::{breakdown_from, noise_term, saturation_diagnostic};
use qkernel_core::calibrate::calibrate_and_report;
use qkernel_core::datasets::{generate_synthetic, pca, relabel_for_advantage, split, Dataset};
use qkernel_core::kernels::{
    gram_from_states, quantum_cross_states, quantum_gram, rbf_cross, rbf_gram, NoiseModel, Shots,
};
use qkernel_core::learner::{accuracy, fit_krr, fit_rbf_baseline, predict, pooled_variance};
use qkernel_core::linalg::{eig_sym, inv_ridge_from};
use qkernel_core::qsim::StateVector;
use qkernel_core::rng::{keyed_stream, StreamRole};
use qkernel_core::{Matrix, SymMatrix};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{DatasetSource, MethodChoice, SweepConfig};
use crate::io::read_dataset;
use crate::record::{RecordKind, ResultRecord};

/// Encoded pool of one seed: processed features, engineered labels, states
/// and the pooled ideal kernel.
pub struct SeedPool {
    pub seed: u64,
    pub data: Dataset,
    pub states: Vec<StateVector>,
    pub q_all: SymMatrix,
    /// Row of the source dataset behind each pool row.
    pub source_rows: Vec<usize>,
    /// Bandwidth of the classical kernel used for relabeling.
    pub relabel_gamma: f64,
}

/// Centers, projects to `num_qubits` principal components and rescales.
pub fn preprocess(features: &Matrix, cfg: &SweepConfig) -> Result<Matrix> {
    let scores = pca(features, cfg.num_qubits)?.scores;
    let n = scores.rows();
    let std: Vec<f64> = (0..scores.cols())
        .map(|j| {
            let col = scores.column(j);
            let ss: f64 = col.iter().map(|v| v * v).sum();
            (ss / (n - 1) as f64).sqrt()
        })
        .collect();
    Ok(Matrix::from_fn(n, scores.cols(), |i, j| {
        let v = scores.get(i, j);
        let v = if cfg.features.standardize { v / std[j] } else { v };
        v * cfg.features.scale
    }))
}

fn raw_pool(cfg: &SweepConfig, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let pool = cfg.pool_size();
    match &cfg.dataset {
        DatasetSource::Synthetic { dim } => Ok((generate_synthetic(pool, *dim, seed)?, (0..pool).collect())),
        DatasetSource::Csv { path } => {
            let ds = read_dataset(path)?;
            if ds.len() < pool {
                bail!("{} has {} rows but the sweep needs {pool}", path.display(), ds.len());
            }
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut keyed_stream(seed, StreamRole::Split, u64::MAX, ds.len() as u64));
            idx.truncate(pool);
            Ok((ds.subset(&idx), idx))
        }
    }
}

pub fn prepare_pool(cfg: &SweepConfig, seed: u64) -> Result<SeedPool> {
    let (raw, source_rows) = raw_pool(cfg, seed)?;
    let x = preprocess(&raw.features, cfg)?;
    let states = qkernel_core::kernels::encode_rows(&x)?;
    let q_all = gram_from_states(&states).matrix;
    let relabel_gamma = cfg.relabel.gamma_scale / (cfg.num_qubits as f64 * pooled_variance(&x)?);
    let labels = if cfg.relabel.enabled {
        let k_all = rbf_gram(&x, relabel_gamma)?.matrix;
        relabel_for_advantage(&q_all, &k_all, cfg.relabel.ridge, cfg.relabel.form)
            .context("relabeling the pool")?
            .labels
    } else {
        raw.labels
    };
    Ok(SeedPool {
        seed,
        data: Dataset::new(x, labels)?,
        states,
        q_all,
        source_rows,
        relabel_gamma,
    })
}

/// Quantities shared by every record of one `(seed, n)` pair.
struct TrainContext<'a> {
    pool: &'a SeedPool,
    n: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
    q_train: SymMatrix,
    c1: Option<f64>,
    c_q: Option<f64>,
    geometric_difference: Option<f64>,
}

impl<'a> TrainContext<'a> {
    fn new(cfg: &SweepConfig, pool: &'a SeedPool, n: usize) -> Result<Self> {
        let s = split(&pool.data, n, cfg.n_test, pool.seed)?
            .split
            .context("split produced no indices")?;
        let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| pool.data.labels[i]).collect() };
        let y_train = pick(&s.train);
        let q_train = pool.q_all.submatrix(&s.train);
        let eig = eig_sym(&q_train)?;
        let shifted = inv_ridge_from(&eig, cfg.ridge).ok();
        let c1 = match &shifted {
            Some((inv, _)) => inv.quadratic_form(&y_train).ok(),
            None => None,
        };
        let c_q = shifted.map(|(_, lmin)| 1.0 / lmin);
        let x_train = pool.data.features.select_rows(&s.train);
        let geometric_difference = rbf_gram(&x_train, pool.relabel_gamma).ok().and_then(|k| {
            qkernel_core::kernels::geometric_difference(&k.matrix, &q_train, &y_train, cfg.relabel.ridge).ok()
        });
        Ok(TrainContext {
            pool,
            n,
            y_test: pick(&s.test),
            train: s.train,
            test: s.test,
            y_train,
            q_train,
            c1,
            c_q,
            geometric_difference,
        })
    }

    fn states(&self, idx: &[usize]) -> Vec<StateVector> {
        idx.iter().map(|&i| self.pool.states[i].clone()).collect()
    }
}

fn fill_quantum(
    rec: &mut ResultRecord,
    cfg: &SweepConfig,
    ctx: &TrainContext,
    m: Shots,
    p_tilde: f64,
    method: MethodChoice,
) -> Result<()> {
    let noise = NoiseModel::new(p_tilde, cfg.layers, cfg.mixing)?;
    let p = noise.effective_rate();
    rec.p = Some(p);
    rec.c1 = ctx.c1;
    rec.geometric_difference = ctx.geometric_difference;
    if let Some(c_q) = ctx.c_q {
        rec.c_q = Some(c_q);
        rec.breakdown_p = Some(breakdown_from(ctx.n, c_q, cfg.num_qubits));
        if let Ok((c2, term)) = noise_term(ctx.n, m, p, cfg.num_qubits, c_q, cfg.confidence) {
            rec.c2 = Some(c2);
            rec.term_noise = Some(term);
        }
    }
    rec.term_ideal = ctx.c1.map(|c1| (c1 / ctx.n as f64).sqrt());

    let seed = ctx.pool.seed;
    let train_states = ctx.states(&ctx.train);
    let w = quantum_gram(&train_states, &noise, m, cfg.fix_diagonal, seed)?.matrix;
    let w = match method.to_method(cfg.nearest_delta) {
        None => {
            rec.min_eig_before = Some(eig_sym(&w)?.min_eigenvalue());
            w
        }
        Some(meth) => {
            let (out, report) = calibrate_and_report(&ctx.q_train, &w, meth)?;
            rec.dist_before = Some(report.dist_before);
            rec.dist_after = Some(report.dist_after);
            rec.min_eig_before = Some(report.min_eig_before);
            rec.min_eig_after = Some(report.min_eig_after);
            rec.passed_lemma = Some(report.passed_lemma);
            out
        }
    };
    if let Ok(sat) = saturation_diagnostic(&ctx.q_train, &w, cfg.ridge) {
        rec.s2 = Some(sat.s2);
        rec.s_f = Some(sat.s_f);
        rec.sqrt_root_n_eps = Some(sat.sqrt_root_n_eps);
    }
    let model = fit_krr(&w, &ctx.y_train, cfg.ridge)?;
    let (_, train_labels) = predict(&model, &w.to_matrix())?;
    rec.train_accuracy = Some(accuracy(&train_labels, &ctx.y_train)?);
    let cross = quantum_cross_states(&train_states, &ctx.states(&ctx.test), &noise, m, seed)?;
    let (_, test_labels) = predict(&model, &cross)?;
    rec.test_accuracy = Some(accuracy(&test_labels, &ctx.y_test)?);
    Ok(())
}

fn fill_rbf(rec: &mut ResultRecord, cfg: &SweepConfig, ctx: &TrainContext) -> Result<()> {
    let x = &ctx.pool.data.features;
    let x_train = x.select_rows(&ctx.train);
    let x_test = x.select_rows(&ctx.test);
    // Selection sees the training rows only.
    let base = fit_rbf_baseline(&x_train, &ctx.y_train, cfg.validation_fraction, ctx.pool.seed)?;
    rec.rbf_gamma = Some(base.search.gamma);
    rec.rbf_lambda = Some(base.search.lambda);
    rec.rbf_validation_accuracy = Some(base.search.accuracy);
    let k = rbf_gram(&x_train, base.search.gamma)?.matrix;
    let (_, train_labels) = predict(&base.model, &k.to_matrix())?;
    rec.train_accuracy = Some(accuracy(&train_labels, &ctx.y_train)?);
    let (_, test_labels) = predict(&base.model, &rbf_cross(&x_train, &x_test, base.search.gamma)?)?;
    rec.test_accuracy = Some(accuracy(&test_labels, &ctx.y_test)?);
    Ok(())
}

/// One unit of sweep work, in output order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordinate {
    Quantum {
        n: usize,
        m: Shots,
        p_tilde: f64,
        method: MethodChoice,
        seed: u64,
    },
    Rbf {
        n: usize,
        seed: u64,
    },
}

fn sorted<T: Clone>(v: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<T> {
    let mut out = v.to_vec();
    out.sort_by(cmp);
    out
}

/// Every coordinate of the sweep: quantum records ordered by
/// `(n, m, p̃, method, seed)`, then baseline records by `(n, seed)`.
pub fn coordinates(cfg: &SweepConfig) -> Vec<Coordinate> {
    let ns = sorted(&cfg.n_list, Ord::cmp);
    let ms = sorted(&cfg.m_list, Ord::cmp);
    let ps = sorted(&cfg.p_tilde_list, f64::total_cmp);
    let methods = sorted(&cfg.methods, Ord::cmp);
    let seeds = sorted(&cfg.seeds, Ord::cmp);
    let mut out = Vec::new();
    for &n in &ns {
        for &m in &ms {
            for &p_tilde in &ps {
                for &method in &methods {
                    for &seed in &seeds {
                        out.push(Coordinate::Quantum {
                            n,
                            m,
                            p_tilde,
                            method,
                            seed,
                        });
                    }
                }
            }
        }
    }
    if cfg.baseline {
        for &n in &ns {
            for &seed in &seeds {
                out.push(Coordinate::Rbf { n, seed });
            }
        }
    }
    out
}

fn run_coordinate(cfg: &SweepConfig, pools: &[(u64, Result<SeedPool, String>)], c: Coordinate) -> ResultRecord {
    let start = Instant::now();
    let (kind, n, seed) = match c {
        Coordinate::Quantum { n, seed, .. } => (RecordKind::Quantum, n, seed),
        Coordinate::Rbf { n, seed } => (RecordKind::Rbf, n, seed),
    };
    let mut rec = ResultRecord::empty(kind, seed, n, cfg.n_test, cfg.num_qubits);
    if let Coordinate::Quantum {
        m, p_tilde, method, ..
    } = c
    {
        rec.m = Some(m);
        rec.p_tilde = Some(p_tilde);
        rec.method = Some(method.as_str().to_string());
    }
    let outcome = match pools.iter().find(|(s, _)| *s == seed).map(|(_, p)| p) {
        Some(Ok(pool)) => TrainContext::new(cfg, pool, n).and_then(|ctx| match c {
            Coordinate::Quantum {
                m, p_tilde, method, ..
            } => fill_quantum(&mut rec, cfg, &ctx, m, p_tilde, method),
            Coordinate::Rbf { .. } => fill_rbf(&mut rec, cfg, &ctx),
        }),
        Some(Err(e)) => Err(anyhow::anyhow!("{e}")),
        None => Err(anyhow::anyhow!("no data prepared for seed {seed}")),
    };
    if let Err(e) = outcome {
        rec.error = Some(format!("{e:#}"));
    }
    if cfg.timing {
        rec.wall_time_ms = start.elapsed().as_millis() as u64;
    }
    rec
}

/// Runs every coordinate in parallel. Stage failures are recorded on the
/// affected records; the returned order never depends on scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Vec<ResultRecord> {
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let pools: Vec<(u64, Result<SeedPool, String>)> = seeds
        .par_iter()
        .map(|&s| (s, prepare_pool(cfg, s).map_err(|e| format!("{e:#}"))))
        .collect();
    coordinates(cfg)
        .into_par_iter()
        .map(|c| run_coordinate(cfg, &pools, c))
        .collect()
}
