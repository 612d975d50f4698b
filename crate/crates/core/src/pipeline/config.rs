//! Pipeline configuration, loaded from a TOML file. Manifest paths are
//! resolved relative to the config file's directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbm::{CdConfig, RbmVariant, SparsityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    General,
    Link,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::General => "general",
            Strategy::Link => "link",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "general" => Ok(Strategy::General),
            "link" => Ok(Strategy::Link),
            other => Err(Error::Usage(format!(
                "unknown strategy '{other}' (expected general or link)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FeaturesConfig {
    /// Append the contest-style organizer features in front of the
    /// descriptors. Requires raster image inputs and the two feature files.
    #[serde(default)]
    pub use_organizer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organizer_train: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organizer_test: Option<String>,
    /// Expected surviving column count after pruning (408 for the released
    /// 816-column corpus).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organizer_expected_kept: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabConfig {
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmStageConfig {
    /// Visible-unit variant of layer 1: "bernoulli", "gaussian", or
    /// "replicated_softmax". Layer 2 is always bernoulli-bernoulli.
    pub variant: String,
    pub hidden1: usize,
    pub hidden2: usize,
    pub epsilon: f64,
    /// Layer-2 learning rate; defaults to 0.01 for a gaussian layer 1 and
    /// to `epsilon` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon2: Option<f64>,
    pub gibbs_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub momentum_final: f64,
    pub momentum_switch_epoch: usize,
    pub weight_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityConfig>,
}

impl RbmStageConfig {
    pub fn variant(&self) -> Result<RbmVariant> {
        match self.variant.as_str() {
            "bernoulli" => Ok(RbmVariant::Bernoulli),
            "gaussian" => Ok(RbmVariant::Gaussian),
            "replicated_softmax" => Ok(RbmVariant::ReplicatedSoftmax),
            other => Err(Error::Validation(format!(
                "unknown RBM variant '{other}'"
            ))),
        }
    }

    pub fn cd_configs(&self, seed: u64) -> Result<(CdConfig, CdConfig)> {
        let variant = self.variant()?;
        let base = CdConfig {
            epsilon: self.epsilon,
            gibbs_steps: self.gibbs_steps,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            momentum_final: self.momentum_final,
            momentum_switch_epoch: self.momentum_switch_epoch,
            weight_decay: self.weight_decay,
            sparsity: self.sparsity,
            seed,
        };
        let mut layer2 = base.clone();
        layer2.epsilon = self.epsilon2.unwrap_or(if variant == RbmVariant::Gaussian {
            0.01
        } else {
            self.epsilon
        });
        Ok((base, layer2))
    }
}

/// Lambda is either a fixed constant or "auto": 1 over the upper bound of C
/// on the training data, measured on a warm-up forward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Fixed(f64),
    Mode(String),
}

impl LambdaSetting {
    pub fn is_auto(&self) -> Result<bool> {
        match self {
            LambdaSetting::Fixed(v) => {
                if *v > 0.0 {
                    Ok(false)
                } else {
                    Err(Error::Validation(format!("lambda = {v} must be > 0")))
                }
            }
            LambdaSetting::Mode(s) if s == "auto" => Ok(true),
            LambdaSetting::Mode(s) => Err(Error::Validation(format!(
                "lambda must be a positive number or \"auto\", got '{s}'"
            ))),
        }
    }

    pub fn fixed_value(&self) -> f64 {
        match self {
            LambdaSetting::Fixed(v) => *v,
            LambdaSetting::Mode(_) => 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiameseStageConfig {
    pub code_dim: usize,
    pub alpha: f64,
    pub lambda: LambdaSetting,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmSection {
    pub image: RbmStageConfig,
    pub text: RbmStageConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub train_manifest: String,
    pub test_manifest: String,
    #[serde(default)]
    pub features: FeaturesConfig,
    pub vocab: VocabConfig,
    pub rbm: RbmSection,
    pub siamese: SiameseStageConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let body = fs::read_to_string(path)?;
        let cfg: PipelineConfig = toml::from_str(&body)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        fs::write(path, body)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab.size == 0 {
            return Err(Error::Validation("vocab size must be >= 1".into()));
        }
        self.rbm.image.variant()?;
        self.rbm.text.variant()?;
        if self.rbm.image.hidden2 != self.rbm.text.hidden2 {
            return Err(Error::Validation(format!(
                "both stacks must share the level-2 width; image gives {}, text {}",
                self.rbm.image.hidden2, self.rbm.text.hidden2
            )));
        }
        if !(0.0 < self.siamese.alpha && self.siamese.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha = {} must lie in (0, 1)",
                self.siamese.alpha
            )));
        }
        self.siamese.lambda.is_auto()?;
        if self.siamese.code_dim == 0 {
            return Err(Error::Validation("siamese code_dim must be >= 1".into()));
        }
        Ok(())
    }
}
