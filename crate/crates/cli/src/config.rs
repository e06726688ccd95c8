//! Sweep configuration, read from JSON. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use qkernel_core::calibrate::Method;
use qkernel_core::datasets::RelabelForm;
use qkernel_core::kernels::{MixingConstant, NoiseModel, Shots};
use qkernel_core::learner::DEFAULT_QUANTUM_RIDGE;
use qkernel_core::qsim::MAX_QUBITS;
use serde::{Deserialize, Serialize};

/// Problems with the configuration itself, as opposed to failures while
/// running it.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Uniform draws from `[−1, 1]^dim`.
    Synthetic { dim: usize },
    /// `f0,…,label` file; relative paths resolve against the working directory.
    Csv { path: PathBuf },
}

/// Kernel repair applied to the sampled training Gram before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    None,
    Clip,
    Flip,
    Shift,
    Nearest,
}

impl MethodChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodChoice::None => "none",
            MethodChoice::Clip => "clip",
            MethodChoice::Flip => "flip",
            MethodChoice::Shift => "shift",
            MethodChoice::Nearest => "nearest",
        }
    }

    pub fn to_method(self, nearest_delta: f64) -> Option<Method> {
        match self {
            MethodChoice::None => None,
            MethodChoice::Clip => Some(Method::Clip),
            MethodChoice::Flip => Some(Method::Flip),
            MethodChoice::Shift => Some(Method::Shift),
            MethodChoice::Nearest => Some(Method::NearestPsd {
                delta: nearest_delta,
            }),
        }
    }
}

impl fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Post-PCA feature treatment before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Rescale every PCA column to unit sample standard deviation.
    pub standardize: bool,
    /// Multiplier applied after standardization.
    pub scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            standardize: true,
            scale: 1.0,
        }
    }
}

/// Label engineering on the pooled train and test features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelabelConfig {
    /// When off, labels come from the dataset source (CSV only).
    pub enabled: bool,
    pub form: RelabelForm,
    /// Ridge added to the classical kernel before inversion. Also used for
    /// the geometric difference reported per record.
    pub ridge: f64,
    /// Classical kernel bandwidth in units of `1/(N·Var)`.
    pub gamma_scale: f64,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            enabled: true,
            form: RelabelForm::InverseClassical,
            ridge: 1e-3,
            gamma_scale: 1.0,
        }
    }
}

fn default_layers() -> u32 {
    NoiseModel::DEFAULT_LAYERS
}
fn default_methods() -> Vec<MethodChoice> {
    vec![MethodChoice::Nearest]
}
fn default_nearest_delta() -> f64 {
    1e-3
}
fn default_ridge() -> f64 {
    DEFAULT_QUANTUM_RIDGE
}
fn default_true() -> bool {
    true
}
fn default_validation_fraction() -> f64 {
    0.5
}
fn default_confidence() -> f64 {
    qkernel_core::bounds::DEFAULT_CONFIDENCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetSource,
    /// Qubit count, equal to the PCA target dimension.
    pub num_qubits: usize,
    pub n_list: Vec<usize>,
    pub n_test: usize,
    /// Shot counts; `"inf"` means exact expectations.
    pub m_list: Vec<Shots>,
    pub p_tilde_list: Vec<f64>,
    #[serde(default = "default_layers")]
    pub layers: u32,
    #[serde(default)]
    pub mixing: MixingConstant,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodChoice>,
    /// Eigenvalue floor of the `nearest` method.
    #[serde(default = "default_nearest_delta")]
    pub nearest_delta: f64,
    /// Ridge for quantum kernel fits, `c₁` and the bound terms.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_true")]
    pub fix_diagonal: bool,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub relabel: RelabelConfig,
    /// Emit one tuned RBF record per `(seed, n)`.
    #[serde(default = "default_true")]
    pub baseline: bool,
    /// Share of the training rows held out for RBF selection.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Confidence parameter of the bound terms.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    /// Record wall-clock time per record. Off by default because timings
    /// make otherwise identical runs differ.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return fail(format!("num_qubits must lie in 1..={MAX_QUBITS}"));
        }
        if let DatasetSource::Synthetic { dim } = self.dataset {
            if dim < self.num_qubits {
                return fail(format!("synthetic dim {dim} is smaller than num_qubits {}", self.num_qubits));
            }
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return fail("n_list must be nonempty with every n >= 2".into());
        }
        if self.n_test == 0 {
            return fail("n_test must be positive".into());
        }
        if self.m_list.is_empty() {
            return fail("m_list must be nonempty".into());
        }
        if self.p_tilde_list.is_empty() || self.p_tilde_list.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("p_tilde_list must be nonempty with every value in [0, 1]".into());
        }
        if self.layers == 0 {
            return fail("layers must be positive".into());
        }
        if self.methods.is_empty() {
            return fail("methods must be nonempty".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must be nonempty".into());
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.nearest_delta) || !nonneg(self.ridge) || !nonneg(self.relabel.ridge) {
            return fail("ridge, nearest_delta and relabel.ridge must be finite and nonnegative".into());
        }
        if !(self.relabel.gamma_scale > 0.0) || !self.relabel.gamma_scale.is_finite() {
            return fail("relabel.gamma_scale must be positive".into());
        }
        if !(self.features.scale > 0.0) || !self.features.scale.is_finite() {
            return fail("features.scale must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return fail("validation_fraction must lie strictly between 0 and 1".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return fail("confidence must lie strictly between 0 and 1".into());
        }
        if !self.relabel.enabled && matches!(self.dataset, DatasetSource::Synthetic { .. }) {
            return fail("synthetic data carries no labels, so relabel.enabled must stay on".into());
        }
        Ok(())
    }

    /// Rows drawn per seed: the largest training set plus the test set.
    pub fn pool_size(&self) -> usize {
        self.n_list.iter().copied().max().unwrap_or(0) + self.n_test
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"synthetic": {"dim": 2}},
        "num_qubits": 2,
        "n_list": [5],
        "n_test": 10,
        "m_list": [10, "inf"],
        "p_tilde_list": [0.0],
        "seeds": [1]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = SweepConfig::from_json(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.m_list, [Shots::Finite(10), Shots::Infinite]);
        assert_eq!(cfg.layers, 8);
        assert_eq!(cfg.methods, [MethodChoice::Nearest]);
        assert!(cfg.fix_diagonal && cfg.baseline && !cfg.timing);
        assert_eq!(cfg.ridge, 1e-8);
        assert_eq!(cfg.pool_size(), 15);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("\"seeds\"", "\"seedz\": [1], \"seeds\"");
        assert!(SweepConfig::from_json(&text).is_err());
        let text = MINIMAL.replace("\"dim\": 2", "\"dim\": 2, \"size\": 3");
        assert!(SweepConfig::from_json(&text).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("\"seeds\": [1]", "\"seeds\": []"),
            ("[0.0]", "[1.5]"),
            ("\"n_test\": 10", "\"n_test\": 0"),
            ("\"num_qubits\": 2", "\"num_qubits\": 3"),
        ] {
            let cfg = SweepConfig::from_json(&MINIMAL.replace(from, to)).unwrap();
            assert!(cfg.validate().is_err(), "{to}");
        }
        assert!(SweepConfig::from_json(&MINIMAL.replace("[10, \"inf\"]", "[0]")).is_err());
        assert!(SweepConfig::from_json(&MINIMAL.replace("[10, \"inf\"]", "[\"lots\"]")).is_err());
    }
}
