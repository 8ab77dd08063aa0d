//! Run configuration: one structured-text file covering data generation,
//! training and evaluation. It is embedded in every artifact a run writes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackKind;
use crate::eval::{EvalConfig, Suite};
use crate::grid::CaseName;
use crate::pmu::{DegradationConfig, GenConfig};
use crate::train::{ModelKind, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `ieee14`, `ieee39` or `ieee57`.
    pub case: String,
    pub seed: u64,
    /// Samples generated before splitting.
    pub n_samples: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Also write a multi-point test set the size of the test split.
    pub multi_point_test: bool,
    /// Model trained by `train`.
    pub model: ModelKind,
    /// Models evaluated by `eval`, where checkpoints exist.
    pub eval_models: Vec<ModelKind>,
    pub suite: Suite,
    /// Degrade the training split too (normally only val/test are degraded).
    pub degrade_train: bool,
    pub generation: GenConfig,
    pub degradation: DegradationConfig,
    pub training: TrainConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: CaseName::Ieee14.as_str().into(),
            seed: 7,
            n_samples: 2000,
            split: [0.8, 0.1, 0.1],
            multi_point_test: true,
            model: ModelKind::Capsnet,
            eval_models: vec![ModelKind::Capsnet, ModelKind::Mlp],
            suite: Suite::Clean,
            degrade_train: false,
            generation: GenConfig::default(),
            degradation: DegradationConfig::default(),
            training: TrainConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    pub fn case_name(&self) -> Result<CaseName> {
        self.case.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.case_name()?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split.iter().any(|&f| f < 0.0) {
            return Err(Error::Config(format!("split fractions {:?} must be non-negative and sum to 1", self.split)));
        }
        if self.generation.scenario.kind != AttackKind::SinglePoint && self.multi_point_test {
            log::warn!("training data is multi-point; the extra multi-point test set duplicates the test split");
        }
        self.training.validate()?;
        self.evaluation.validate()
    }
}
