use std::path::Path;

use serde::{Deserialize, Serialize};
use sortnet::ensemble::EnsembleModel;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Saved model plus what is needed to rebuild its evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_id: String,
    pub dataset: String,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub simulation: usize,
    pub split_seed: u64,
    pub train_error: f64,
    pub test_error: f64,
    /// SHA-256 prefix of the per-view training logs.
    pub log_digest: String,
    pub model: EnsembleModel,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string(self).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(CliError::Data(format!("unsupported model format version {v}"))),
            None => return Err(CliError::Data("model file has no format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
