//! TOML experiment configuration. Every field has a default; a config file
//! only lists what it overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BiasStudy,
    Contraction,
    #[default]
    Sample,
    Ensemble,
    Calibrate,
    Diagnose,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BiasStudy => "bias-study",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Sample => "sample",
            ExperimentKind::Ensemble => "ensemble",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    SgUbu,
    SmsUbu,
    SgBaoab,
    SmsBaoab,
    SgHmc,
    SmsGhmc,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::SgUbu => "sg-ubu",
            SamplerKind::SmsUbu => "sms-ubu",
            SamplerKind::SgBaoab => "sg-baoab",
            SamplerKind::SmsBaoab => "sms-baoab",
            SamplerKind::SgHmc => "sg-hmc",
            SamplerKind::SmsGhmc => "sms-ghmc",
        }
    }

    /// Integrator of the unadjusted samplers; `None` for SMS-GHMC.
    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            SamplerKind::SgUbu | SamplerKind::SmsUbu => Some(Scheme::Ubu),
            SamplerKind::SgBaoab | SamplerKind::SmsBaoab => Some(Scheme::Baoab),
            SamplerKind::SgHmc => Some(Scheme::Euler),
            SamplerKind::SmsGhmc => None,
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self, SamplerKind::SmsUbu | SamplerKind::SmsBaoab | SamplerKind::SmsGhmc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Idx,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    /// Header name or 0-based index of the label column.
    pub label_column: String,
    /// Keep only the first `max_train` training rows.
    pub max_train: Option<usize>,
    pub batch_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub features: usize,
    pub classes: usize,
    pub signal: f64,
    pub row_sigma: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_csv: None,
            test_csv: None,
            label_column: "label".into(),
            max_train: None,
            batch_size: 200,
            n_train: 1000,
            n_test: 500,
            features: 3,
            classes: 3,
            signal: 1.0,
            row_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Logreg,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub prior_variance: f64,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Logreg,
            prior_variance: 1.0 / 50.0,
            hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub h: f64,
    /// Friction; `1 / rho` when absent.
    pub gamma: Option<f64>,
    pub epochs: f64,
    pub burn_in_epochs: f64,
    pub thin: usize,
    /// Anchor SG estimators (and SMS sweeps) at the optimizer output.
    pub variance_reduction: bool,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            kind: SamplerKind::SmsUbu,
            h: 2.5e-4,
            gamma: None,
            epochs: 40.0,
            burn_in_epochs: 10.0,
            thin: 1,
            variance_reduction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Standard deviation of the random initialization.
    pub init_std: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 15,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwaConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for SwaConfig {
    fn default() -> Self {
        Self { lr: 1e-3, epochs: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub enabled: bool,
    pub rho: f64,
    /// `rho_max = rho_max_factor * rho`.
    pub rho_max_factor: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rho: 50f64.powf(-0.5),
            rho_max_factor: 6.0,
        }
    }
}

impl LocalizationConfig {
    pub fn rho_max(&self) -> f64 {
        self.rho_max_factor * self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    /// Chains started around one anchor for the R-hat check.
    pub rhat_chains: usize,
    /// Independent repetitions of the calibration comparison.
    pub repeats: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 4,
            rhat_chains: 4,
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub samplers: Vec<SamplerKind>,
    pub h0: f64,
    /// Replace `h0` by the largest stable stepsize found on a quarter-octave ladder.
    pub search_h0: bool,
    /// Friction; `sqrt(2 M)` at the anchor when absent.
    pub gamma: Option<f64>,
    pub levels: usize,
    /// Epochs of the coarsest level; level `l` runs `base_epochs * 2^l`.
    pub base_epochs: f64,
    pub burn_in_fraction: f64,
    pub chunks: usize,
    pub test_functions: usize,
    pub variance_reduction: bool,
    /// Gradient-norm tolerance of the anchor, relative to `sqrt(d)`.
    pub anchor_tol: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            samplers: vec![
                SamplerKind::SmsUbu,
                SamplerKind::SgUbu,
                SamplerKind::SmsBaoab,
                SamplerKind::SgBaoab,
                SamplerKind::SgHmc,
            ],
            h0: 2e-3,
            search_h0: false,
            gamma: None,
            levels: 4,
            base_epochs: 400.0,
            burn_in_fraction: 0.2,
            chunks: 4,
            test_functions: 20,
            variance_reduction: true,
            anchor_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    /// `(m, M)` pairs; each gives the diagonal quadratic `diag(m, M)`.
    pub cases: Vec<[f64; 2]>,
    /// Stepsizes; `{0.01, 0.1 / gamma}` when empty.
    pub stepsizes: Vec<f64>,
    pub pairs: usize,
    pub steps: usize,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            cases: vec![[1.0, 1.0], [0.5, 2.0]],
            stepsizes: Vec::new(),
            pairs: 64,
            steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhmcSpec {
    pub h: f64,
    pub sweeps: usize,
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for GhmcSpec {
    fn default() -> Self {
        Self {
            h: 1e-5,
            sweeps: 10,
            alpha: 0.7,
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub ace_ranges: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { ace_ranges: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub runs: usize,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            runs: 4,
            power_iters: 200,
            power_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Multiplies every run length (epochs, steps, iterations).
    pub scale: f64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub sampler: SamplerSpec,
    pub optimizer: OptimizerConfig,
    pub swa: SwaConfig,
    pub localization: LocalizationConfig,
    pub ensemble: EnsembleConfig,
    pub bias: BiasConfig,
    pub contraction: ContractionConfig,
    pub ghmc: GhmcSpec,
    pub calibration: CalibrationConfig,
    pub diagnose: DiagnoseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            scale: 1.0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            sampler: SamplerSpec::default(),
            optimizer: OptimizerConfig::default(),
            swa: SwaConfig::default(),
            localization: LocalizationConfig::default(),
            ensemble: EnsembleConfig::default(),
            bias: BiasConfig::default(),
            contraction: ContractionConfig::default(),
            ghmc: GhmcSpec::default(),
            calibration: CalibrationConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::parse(text, "<config>")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            path: origin.into(),
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Friction of the sampling experiments.
    pub fn gamma(&self) -> f64 {
        self.sampler.gamma.unwrap_or(1.0 / self.localization.rho)
    }

    /// `x * scale`, at least 1.
    pub fn scaled(&self, x: f64) -> usize {
        (x * self.scale).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scale", self.scale),
            ("sampler.h", self.sampler.h),
            ("model.prior_variance", self.model.prior_variance),
            ("localization.rho", self.localization.rho),
            ("localization.rho_max_factor", self.localization.rho_max_factor),
            ("optimizer.lr", self.optimizer.lr),
            ("bias.h0", self.bias.h0),
            ("bias.base_epochs", self.bias.base_epochs),
            ("ghmc.h", self.ghmc.h),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(g) = self.sampler.gamma.or(self.bias.gamma) {
            if !(g > 0.0) {
                return Err(Error::invalid(format!("gamma must be positive, got {g}")));
            }
        }
        if self.data.batch_size == 0 {
            return Err(Error::invalid("data.batch_size must be positive"));
        }
        if !(self.sampler.burn_in_epochs >= 0.0 && self.sampler.burn_in_epochs < self.sampler.epochs) {
            return Err(Error::invalid("sampler.burn_in_epochs must lie in [0, epochs)"));
        }
        if self.bias.levels < 3 {
            return Err(Error::invalid("bias.levels must be at least 3 to fit a slope"));
        }
        if self.ensemble.members == 0 {
            return Err(Error::invalid("ensemble.members must be at least 1"));
        }
        Ok(())
    }

    /// Dotted paths of every field that differs from the defaults.
    pub fn overrides(&self) -> Vec<String> {
        let ours = toml::Value::try_from(self).expect("config serializes");
        let base = toml::Value::try_from(Self::default()).expect("config serializes");
        let mut out = Vec::new();
        diff_values("", &ours, Some(&base), &mut out);
        out
    }
}

fn diff_values(prefix: &str, a: &toml::Value, b: Option<&toml::Value>, out: &mut Vec<String>) {
    match (a, b) {
        (toml::Value::Table(ta), Some(toml::Value::Table(tb))) => {
            for (k, va) in ta {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                diff_values(&p, va, tb.get(k), out);
            }
        }
        (a, Some(b)) if a == b => {}
        _ => out.push(prefix.to_string()),
    }
}
