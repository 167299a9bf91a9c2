use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_io::CsvViewSpec;
use crate::error::{MeibError, Result};
use crate::kernel::KernelConfig;
use crate::model::TrainConfig;
use crate::nn::Activation;
use crate::synth::SynthConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Default β values for both axes of the grid.
pub const DEFAULT_BETA_GRID: [f64; 7] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NoiseSweep,
    DimSweep,
    SampleSweep,
    BetaGrid,
    SingleTrain,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::DimSweep => "dim_sweep",
            ExperimentKind::SampleSweep => "sample_sweep",
            ExperimentKind::BetaGrid => "beta_grid",
            ExperimentKind::SingleTrain => "single_train",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::NoiseSweep,
            Self::DimSweep,
            Self::SampleSweep,
            Self::BetaGrid,
            Self::SingleTrain,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    /// Default sweep values when the config leaves them out.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            ExperimentKind::NoiseSweep => vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2],
            ExperimentKind::DimSweep => vec![5.0, 15.0, 25.0, 35.0, 45.0, 55.0],
            ExperimentKind::SampleSweep => vec![50.0, 100.0, 200.0, 500.0, 1000.0],
            ExperimentKind::BetaGrid => DEFAULT_BETA_GRID.to_vec(),
            ExperimentKind::SingleTrain => vec![0.0],
        }
    }
}

/// Network shape and regularization. View dimensions come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder_layers: Vec<Vec<usize>>,
    pub fusion_layers: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    /// Logit count; `None` uses the number of classes in the data.
    pub num_classes: Option<usize>,
    pub activation: Activation,
    /// `None` means "tune on a held-out seed before the experiment".
    pub betas: Option<Vec<f64>>,
    pub kernel: KernelConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: vec![vec![512, 512, 512], vec![512]],
            fusion_layers: vec![256],
            classifier_hidden: vec![],
            num_classes: Some(10),
            activation: Activation::Relu,
            betas: None,
            kernel: KernelConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Noise factors, extra dimensions, per-class sample sizes or β values
    /// depending on the experiment kind.
    pub values: Option<Vec<f64>>,
    /// Second axis of a β grid; defaults to `values`.
    pub values2: Option<Vec<f64>>,
    /// Also train a β = (0, 0) MEIB cell in a β grid.
    pub include_zero_cell: bool,
    /// Sweep value at which first-layer weight norms are recorded in a
    /// dimension sweep; defaults to the largest value.
    pub weight_norm_value: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            values: None,
            values2: None,
            include_zero_cell: true,
            weight_norm_value: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    /// Candidate β values; every pair is tried.
    pub grid: Vec<f64>,
    /// The tuning data seed is `seed_base + seed_offset`.
    pub seed_offset: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            grid: vec![1e-4, 1e-3, 1e-2],
            seed_offset: 1_000_003,
        }
    }
}

/// External multi-view data for `train` and `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    #[serde(flatten)]
    pub views: CsvViewSpec,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Label written to the `experiment` column.
    pub name: String,
    /// Set by the subcommand when omitted.
    pub kind: Option<ExperimentKind>,
    pub repeats: usize,
    pub seed_base: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
    /// Write measured wall time; when false `wall_ms` is 0 so reruns are
    /// byte-identical.
    pub record_wall_time: bool,
    /// Rows per chunk when measuring final per-view information; defaults to
    /// the training batch size.
    pub mi_chunk: Option<usize>,
    pub data: SynthConfig,
    pub csv: Option<CsvSource>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub tuning: TuningConfig,
    /// Checkpoint written by `train` and read by `eval`; defaults to
    /// `<output_dir>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            name: "meib".into(),
            kind: None,
            repeats: 5,
            seed_base: 0,
            threads: 1,
            output_dir: PathBuf::from("results"),
            record_wall_time: true,
            mi_chunk: None,
            data: SynthConfig::default(),
            csv: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            tuning: TuningConfig::default(),
            checkpoint: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> MeibError {
    MeibError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.kind.ok_or_else(|| config_err("experiment kind is not set"))
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        Ok(self
            .sweep
            .values
            .clone()
            .unwrap_or_else(|| self.kind.map(|k| k.default_values()).unwrap_or_default()))
    }

    pub fn values2(&self) -> Result<Vec<f64>> {
        match &self.sweep.values2 {
            Some(v) => Ok(v.clone()),
            None => self.values(),
        }
    }

    pub fn mi_chunk(&self) -> usize {
        self.mi_chunk.unwrap_or(self.train.batch_size)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.ckpt"))
    }

    /// Checks everything that can be checked before any data is generated.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let kind = self.kind()?;
        if self.repeats == 0 {
            return Err(config_err("repeats must be at least 1"));
        }
        if self.threads == 0 {
            return Err(config_err("threads must be at least 1"));
        }
        if self.mi_chunk == Some(0) || self.mi_chunk == Some(1) {
            return Err(config_err("mi_chunk must be at least 2"));
        }
        let values = self.values()?;
        if values.is_empty() {
            return Err(config_err("sweep values must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(config_err("sweep values must be finite"));
        }
        let whole = |v: &f64| *v >= 1.0 && v.fract() == 0.0;
        match kind {
            ExperimentKind::NoiseSweep if values.iter().any(|v| *v < 0.0) => {
                return Err(config_err("noise factors must be >= 0"));
            }
            ExperimentKind::DimSweep | ExperimentKind::SampleSweep if !values.iter().all(whole) => {
                return Err(config_err("dimension and sample-size values must be positive integers"));
            }
            ExperimentKind::BetaGrid => {
                if values.iter().chain(&self.values2()?).any(|v| *v < 0.0) {
                    return Err(config_err("beta grid values must be >= 0"));
                }
                if self.values2()?.is_empty() {
                    return Err(config_err("second beta axis must not be empty"));
                }
            }
            _ => {}
        }
        if kind != ExperimentKind::SingleTrain && self.csv.is_some() {
            return Err(config_err("csv data is only supported for single training runs"));
        }
        let m = &self.model;
        let views = match &self.csv {
            Some(c) => c.views.paths.len(),
            None => 2,
        };
        if m.encoder_layers.len() != views {
            return Err(config_err(format!(
                "{} encoder topologies for {views} views",
                m.encoder_layers.len()
            )));
        }
        if m.encoder_layers.iter().any(|l| l.is_empty() || l.contains(&0))
            || m.fusion_layers.contains(&0)
            || m.classifier_hidden.contains(&0)
        {
            return Err(config_err("layer widths must be at least 1 and encoders need a layer"));
        }
        if let Some(b) = &m.betas {
            if b.len() != views || b.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(config_err(format!("need {views} finite non-negative betas, got {b:?}")));
            }
        }
        if m.num_classes.is_some_and(|c| c < 2) {
            return Err(config_err("num_classes must be at least 2"));
        }
        m.kernel.validate().map_err(|e| config_err(e.to_string()))?;
        if self.train.batch_size < 2 || !(self.train.learning_rate > 0.0) || self.train.epochs == 0 {
            return Err(config_err(
                "training needs batch_size >= 2, a positive learning rate and at least one epoch",
            ));
        }
        if m.betas.is_none()
            && kind != ExperimentKind::BetaGrid
            && (self.tuning.grid.is_empty() || self.tuning.grid.iter().any(|x| !(*x >= 0.0)))
        {
            return Err(config_err("tuning grid must hold non-negative values"));
        }
        if self.csv.is_none() {
            self.data.validate().map_err(|e| config_err(e.to_string()))?;
        }
        Ok(())
    }
}
