//! Run configuration: a JSON object whose omitted fields take defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sortnet::encoder::{ProjectionStrategy, DEFAULT_LDA_RATIO};
use sortnet::ensemble::{default_cycle, EncodingKind, EnsembleConfig};
use sortnet::network::{HiddenRule, LrSchedule, NetworkConfig};
use sortnet::Norm;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub layers: Vec<usize>,
    pub embed_dim: usize,
    pub poly_degree: usize,
    pub views: usize,
    pub eta: f64,
    pub iterations: usize,
    pub llu: bool,
    pub augment: usize,
    pub strategy_cycle: Vec<ProjectionStrategy>,
    pub knn_k: usize,
    pub seed: u64,
    pub simulations: usize,
    pub test_fraction: f64,
    pub lr_schedule: LrSchedule,
    pub lda_ratio: f64,
    pub encoding: EncodingKind,
    pub hidden_rule: HiddenRule,
    pub winners: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            layers: vec![128],
            embed_dim: 32,
            poly_degree: 2,
            views: 7,
            eta: 0.1,
            iterations: 300,
            llu: false,
            augment: 0,
            strategy_cycle: default_cycle(),
            knn_k: 1,
            seed: 42,
            simulations: 5,
            test_fraction: 0.2,
            lr_schedule: LrSchedule::Constant,
            lda_ratio: DEFAULT_LDA_RATIO,
            encoding: EncodingKind::Projected,
            hidden_rule: HiddenRule::default(),
            winners: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.simulations == 0 {
            return Err(CliError::Config("simulations must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(CliError::Config("knn_k must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if !(self.lda_ratio >= 0.0 && self.lda_ratio <= 1.0) {
            return Err(CliError::Config(format!("lda_ratio {} outside [0, 1]", self.lda_ratio)));
        }
        self.ensemble(2, self.seed).validate()?;
        Ok(())
    }

    /// Ensemble settings for a dataset with `classes` classes.
    pub fn ensemble(&self, classes: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            views: self.views,
            strategy_cycle: self.strategy_cycle.clone(),
            embed_dim: self.embed_dim,
            poly_degree: self.poly_degree,
            lda_ratio: self.lda_ratio,
            encoding: self.encoding,
            network: NetworkConfig {
                hidden_sizes: self.layers.clone(),
                classes,
                iterations: self.iterations,
                eta: self.eta,
                last_layer_update: self.llu,
                augment_count: self.augment,
                lr_schedule: self.lr_schedule,
                norm: Norm::L1,
                winners: self.winners,
                hidden_rule: self.hidden_rule,
            },
            seed,
        }
    }

    /// Seed of simulation `s`.
    pub fn simulation_seed(&self, s: usize) -> u64 {
        self.seed.wrapping_add(s as u64)
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        short_hash(json.as_bytes())
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..12].to_string()
}
