//! JSON checkpoint container.
//!
//! ```json
//! {
//!   "format": "graph-ttt-checkpoint",
//!   "version": 1,
//!   "snapshot": {
//!     "config": { "arch": "gcn", "num_layers": 3, ... },
//!     "params": {
//!       "extractor":   [[{"rows": F, "cols": H, "values": [...]}, {"rows": 1, ...}], ...],
//!       "main_layers": [...], "main_pred": [...],
//!       "ssl_layers":  [...], "summary": [...], "projection": [...]
//!     },
//!     "stats": { "mu": {...}, "sigma": {...}, "n": 96 },
//!     "meta":  { "gamma": 0.5, "epoch": 41, "val_accuracy": 0.91 }
//!   }
//! }
//! ```
//!
//! Matrices are row-major. Loading re-validates every matrix and checks the
//! parameter shapes against the stored config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_params, ModelError, ParamSnapshot};

pub const CHECKPOINT_FORMAT: &str = "graph-ttt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    snapshot: ParamSnapshot,
}

pub fn save_checkpoint(snapshot: &ParamSnapshot, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let container = Container {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        snapshot: snapshot.clone(),
    };
    let text = serde_json::to_string(&container).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(path.as_ref(), text)
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamSnapshot, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    let c: Container =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if c.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unexpected format '{}'", c.format)));
    }
    if c.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", c.version)));
    }
    let reference = init_params(&c.snapshot.config, 0)?;
    let shapes = |p: &super::ModelParams| p.iter().map(|(g, m)| (g, m.shape())).collect::<Vec<_>>();
    if shapes(&reference) != shapes(&c.snapshot.params) {
        return Err(ModelError::Shape("checkpoint parameters do not match its config".into()));
    }
    Ok(c.snapshot)
}
