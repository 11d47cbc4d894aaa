//! Joint training, per-sample test-time adaptation and evaluation.

mod adapt;
mod eval;
mod probe;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::models::ModelError;
use crate::optim::{self, OptimError};
use crate::ssl::{SslError, SslWeights};
use crate::tensor::TensorError;

pub use adapt::{ttt_adapt, AdaptOutcome};
pub use probe::{task_cka, train_task_models, TaskModel, MAX_PROBE_GRAPHS};
pub use eval::{evaluate, EvalMode, EvalReport, EvalSettings, SampleRecord};
pub use train::{train_joint, EpochRecord, TrainOutcome};

#[derive(Debug, Error)]
pub enum TttError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ssl(#[from] SslError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid config: {field} = {value} ({rule})")]
    Config {
        field: &'static str,
        value: String,
        rule: &'static str,
    },
    #[error("graph {0} has no label")]
    Unlabelled(usize),
    #[error("{0}")]
    Input(String),
}

impl From<TensorError> for TttError {
    fn from(e: TensorError) -> Self {
        TttError::Model(ModelError::Tensor(e))
    }
}

fn bad(field: &'static str, value: impl ToString, rule: &'static str) -> TttError {
    TttError::Config { field, value: value.to_string(), rule }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
    pub seed: u64,
    /// Weight of the supervised loss; 0 trains the self-supervised task alone.
    pub main_weight: f64,
    /// Adds the adaptation constraint to the joint objective, with
    /// statistics refreshed at the start of every epoch.
    pub constraint_in_training: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 16,
            optimizer: "adam".into(),
            seed: 0,
            main_weight: 1.0,
            constraint_in_training: false,
        }
    }
}

pub const BATCH_SIZES: [usize; 4] = [8, 16, 32, 64];

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TttError> {
        if self.epochs == 0 {
            return Err(bad("train.epochs", self.epochs, "must be at least 1"));
        }
        if !(1e-5..=5e-3).contains(&self.learning_rate) {
            return Err(bad("train.learning_rate", self.learning_rate, "must lie in [1e-5, 5e-3]"));
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(bad("train.batch_size", self.batch_size, "must be one of 8, 16, 32, 64"));
        }
        if !(self.main_weight >= 0.0 && self.main_weight.is_finite()) {
            return Err(bad("train.main_weight", self.main_weight, "must be finite and >= 0"));
        }
        optim::build(&self.optimizer, self.learning_rate)?;
        Ok(())
    }
}

/// Adaptive views joined to a graph when estimating its embedding statistics.
pub const DEFAULT_STAT_VIEWS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TttConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Adaptive views added to the test graph when estimating its embedding
    /// statistics.
    pub num_stat_views: usize,
    pub restore_per_sample: bool,
    pub optimizer: String,
    pub seed: u64,
    /// Draw fresh views at every step instead of fixing them per sample.
    pub resample_views: bool,
}

impl Default for TttConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            learning_rate: 1e-4,
            num_stat_views: DEFAULT_STAT_VIEWS,
            restore_per_sample: true,
            optimizer: "adam".into(),
            seed: 0,
            resample_views: false,
        }
    }
}

impl TttConfig {
    pub fn validate(&self) -> Result<(), TttError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("ttt.learning_rate", self.learning_rate, "must be positive"));
        }
        if self.num_stat_views == 0 {
            return Err(bad("ttt.num_stat_views", 0, "must be at least 1"));
        }
        optim::build(&self.optimizer, self.learning_rate)?;
        Ok(())
    }
}

/// Validates the loss weights for use in this module.
pub(crate) fn check_weights(w: &SslWeights) -> Result<(), TttError> {
    Ok(w.validate()?)
}
