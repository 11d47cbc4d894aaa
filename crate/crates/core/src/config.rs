//! Experiment configuration: one serializable record holding every knob and
//! seed of a run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::ViewSpec;
use crate::graphdata::{
    ood_split, parse_tudataset, random_split, AdjacencyScheme, DataError, Dataset, SplitKind, SplitSpec,
};
use crate::models::{GnnConfig, Readout};
use crate::synth::{synth_dataset, SynthSpec};
use crate::ssl::SslWeights;
use crate::ttt::{EvalMode, TrainConfig, TttConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn field_err(field: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.to_string() }
}

/// Where graphs come from: a TUDataset directory when `dir` is set,
/// otherwise the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub dir: Option<PathBuf>,
    pub name: Option<String>,
    pub synth: SynthSpec,
}

/// The model section; class count and attribute width come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub shared_layers: usize,
    /// Defaults to the architecture's own readout.
    pub readout: Option<Readout>,
    pub dropout: f64,
    pub layer_norm: bool,
    pub adjacency: Option<AdjacencyScheme>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: "gcn".into(),
            num_layers: 2,
            hidden_dim: 32,
            shared_layers: 1,
            readout: None,
            dropout: 0.0,
            layer_norm: false,
            adjacency: None,
        }
    }
}

impl ModelConfig {
    pub fn to_gnn(&self, num_classes: usize, attr_dim: usize) -> Result<GnnConfig, ConfigError> {
        let model_err = |e: crate::models::ModelError| match e {
            crate::models::ModelError::Config { field, message } => field_err(format!("model.{field}"), message),
            other => field_err("model.arch", other),
        };
        let mut cfg = GnnConfig::new(&self.arch, self.num_layers, self.hidden_dim, self.shared_layers, num_classes, attr_dim)
            .map_err(model_err)?;
        if let Some(r) = self.readout {
            cfg.readout = r;
        }
        cfg.dropout = self.dropout;
        cfg.layer_norm = self.layer_norm;
        cfg.adjacency = self.adjacency;
        cfg.validate().map_err(model_err)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { kind: SplitKind::Ood, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ttt: TttConfig,
    pub views: ViewSpec,
    pub ssl: SslWeights,
    pub split: SplitConfig,
    pub modes: Vec<EvalMode>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig { epochs: 200, learning_rate: 5e-3, ..TrainConfig::default() },
            ttt: TttConfig::default(),
            views: ViewSpec::default(),
            ssl: SslWeights::default(),
            split: SplitConfig::default(),
            modes: vec![EvalMode::Raw, EvalMode::Joint, EvalMode::Gt3],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Checks every section that can be checked without loading data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.dir.is_some() && self.dataset.name.is_none() {
            return Err(field_err("dataset.name", "required when dataset.dir is set"));
        }
        if self.dataset.dir.is_none() {
            self.dataset.synth.validate().map_err(|e| field_err("dataset.synth", e))?;
        }
        // class count and width are placeholders here; the real ones are
        // checked again once the data is loaded
        self.model.to_gnn(2, 1)?;
        self.train.validate().map_err(ttt_field)?;
        self.ttt.validate().map_err(ttt_field)?;
        self.views.validate().map_err(|e| match e {
            crate::augment::AugmentError::InvalidSpec { field, .. } => field_err(format!("views.{field}"), e),
            other => field_err("views", other),
        })?;
        self.ssl.validate().map_err(|e| match e {
            crate::ssl::SslError::InvalidWeight { field, .. } => field_err(format!("ssl.{field}"), e),
            other => field_err("ssl", other),
        })?;
        if self.modes.is_empty() {
            return Err(field_err("modes", "must list at least one evaluation mode"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset, ConfigError> {
        Ok(match (&self.dataset.dir, &self.dataset.name) {
            (Some(dir), Some(name)) => parse_tudataset(dir, name)?,
            (Some(_), None) => return Err(field_err("dataset.name", "required when dataset.dir is set")),
            (None, _) => synth_dataset(&self.dataset.synth)?,
        })
    }

    pub fn make_split(&self, d: &Dataset) -> Result<SplitSpec, ConfigError> {
        Ok(match self.split.kind {
            SplitKind::Ood => ood_split(d, self.split.seed)?,
            SplitKind::Random => random_split(d, self.split.seed)?,
        })
    }

    /// Model config sized for `d`.
    pub fn gnn_for(&self, d: &Dataset) -> Result<GnnConfig, ConfigError> {
        self.model.to_gnn(d.num_classes(), d.attr_dim())
    }
}

fn ttt_field(e: crate::ttt::TttError) -> ConfigError {
    match e {
        crate::ttt::TttError::Config { field, value, rule } => field_err(field, format!("= {value} ({rule})")),
        other => field_err("train", other),
    }
}
