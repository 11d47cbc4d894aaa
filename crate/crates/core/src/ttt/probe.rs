use super::{train_joint, TrainConfig, TttError};
use crate::analysis::{layerwise_cka, CkaRow, TaggedModel};
use crate::augment::ViewSpec;
use crate::graphdata::Graph;
use crate::models::{GnnConfig, Head, ParamSnapshot};
use crate::ssl::SslWeights;

/// Largest probe set drawn from the validation split.
pub const MAX_PROBE_GRAPHS: usize = 64;

/// A model trained on one task alone.
#[derive(Debug, Clone)]
pub struct TaskModel {
    pub tag: &'static str,
    pub snapshot: ParamSnapshot,
    /// The head carrying that task's layers.
    pub head: Head,
}

/// Trains four models from the same initialisation: M on classification
/// only, C on both contrastive terms, G on the global term and L on the
/// local term (the last three without any labels).
pub fn train_task_models(
    train: &[&Graph],
    val: &[&Graph],
    cfg: &GnnConfig,
    tcfg: &TrainConfig,
    weights: &SslWeights,
    spec: &ViewSpec,
) -> Result<Vec<TaskModel>, TttError> {
    let ssl_only = TrainConfig { main_weight: 0.0, ..tcfg.clone() };
    let ssl = SslWeights { gamma: 1.0, ..*weights };
    let tasks = [
        ("M", tcfg, SslWeights { gamma: 0.0, ..*weights }, Head::Main),
        ("C", &ssl_only, ssl, Head::Ssl),
        ("G", &ssl_only, SslWeights { alpha: 0.0, ..ssl }, Head::Ssl),
        ("L", &ssl_only, SslWeights { global_weight: 0.0, ..ssl }, Head::Ssl),
    ];
    tasks
        .into_iter()
        .map(|(tag, t, w, head)| {
            // unsupervised models have no validation signal to select on
            let v = if head == Head::Main { val } else { &[] };
            let out = train_joint(train, v, cfg, t, &w, spec)?;
            Ok(TaskModel { tag, snapshot: out.snapshot, head })
        })
        .collect()
}

/// Layer-wise CKA for all six pairs of task models on `probe`.
pub fn task_cka(probe: &[&Graph], models: &[TaskModel]) -> Result<Vec<CkaRow>, TttError> {
    let cfg = &models.first().ok_or_else(|| TttError::Input("no models to compare".into()))?.snapshot.config;
    if models.iter().any(|m| &m.snapshot.config != cfg) {
        return Err(TttError::Input("task models differ in architecture".into()));
    }
    let tagged: Vec<TaggedModel> = models
        .iter()
        .map(|m| TaggedModel { tag: m.tag, params: &m.snapshot.params, head: m.head })
        .collect();
    Ok(layerwise_cka(probe, &tagged, cfg)?)
}
