use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::losses::{ContentLayer, LossWeights};
use crate::model::{DiscriminatorConfig, GeneratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_constant_epochs: usize,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Side length of the square training images.
    pub image_size: usize,
    pub checkpoint_every: usize,
    pub pool_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub content_layer: ContentLayer,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_initial: 2e-4,
            lr_constant_epochs: 100,
            batch_size: 1,
            weights: LossWeights::default(),
            seed: 0,
            image_size: 400,
            checkpoint_every: 10,
            pool_size: 50,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            content_layer: ContentLayer::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.lr_constant_epochs > self.epochs {
            return bad(format!(
                "lr_constant_epochs ({}) exceeds epochs ({})",
                self.lr_constant_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return bad(format!("lr_initial must be positive, got {}", self.lr_initial));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        self.weights.validate()?;
        self.generator.validate()?;
        let g = self.generator.size_multiple();
        let d = 1usize << self.discriminator.n_blocks;
        let m = g.max(d);
        if self.image_size == 0 || !self.image_size.is_multiple_of(m) || self.image_size < 2 * g {
            return bad(format!(
                "image_size {} must be a positive multiple of {m} and at least {}",
                self.image_size,
                2 * g
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = TrainingConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(TrainingConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = TrainingConfig::from_toml_str(
            "epochs = 30\nimage_size = 96\n[weights]\nlambda1 = 0.0\n[generator]\nbase_filters = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.epochs, 30);
        assert_eq!(cfg.weights.lambda1, 0.0);
        assert_eq!(cfg.weights.lambda2, 10.0);
        assert_eq!(cfg.generator.base_filters, 8);
        assert_eq!(cfg.generator.n_residual_blocks, 9);
        assert!(TrainingConfig::from_toml_str("epoch = 3").is_err());
    }

    #[test]
    fn rejects_inconsistent_values() {
        let base = TrainingConfig::default();
        for cfg in [
            TrainingConfig { lr_constant_epochs: 300, ..base.clone() },
            TrainingConfig { batch_size: 0, ..base.clone() },
            TrainingConfig { image_size: 100, ..base.clone() },
            TrainingConfig { lr_initial: -1.0, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
        }
    }
}
