use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;
use crate::preprocess::AugmentationConfig;
use crate::skeletal::FRAME_DIM;

/// Shape of the encoder–decoder classifier.
///
/// The model width equals `input_dim`: frames enter the encoder directly,
/// without an input projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    pub dropout: f64,
    /// Rows of the learned positional table. Frames past the last row reuse it.
    #[serde(default = "default_max_frames")]
    pub max_frames: usize,
}

fn default_max_frames() -> usize {
    256
}

impl ModelConfig {
    /// The default compact configuration for `num_classes` glosses.
    pub fn new(num_classes: usize) -> Self {
        Self {
            input_dim: FRAME_DIM,
            num_classes,
            encoder_layers: 6,
            decoder_layers: 6,
            attention_heads: 9,
            feedforward_dim: 2048,
            dropout: 0.1,
            max_frames: default_max_frames(),
        }
    }

    pub fn width(&self) -> usize {
        self.input_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.input_dim != FRAME_DIM {
            return fail(format!("input_dim must be {FRAME_DIM} (54 landmarks x 2), got {}", self.input_dim));
        }
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("encoder_layers and decoder_layers must be positive".into());
        }
        if self.attention_heads == 0 || !self.input_dim.is_multiple_of(self.attention_heads) {
            return fail(format!(
                "attention_heads ({}) must divide the model width ({})",
                self.attention_heads, self.input_dim
            ));
        }
        if self.feedforward_dim == 0 {
            return fail("feedforward_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.max_frames == 0 {
            return fail("max_frames must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    #[default]
    BestValTop1,
    LastEpoch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain stochastic gradient descent, no momentum or schedule.
    #[default]
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub global_seed: u64,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub model_selection: ModelSelection,
    /// Drop frames with no detected landmark before normalization.
    #[serde(default)]
    pub drop_empty_frames: bool,
    /// Also evaluate the test split after every epoch (never used for selection).
    #[serde(default)]
    pub record_test_curve: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            optimizer: Optimizer::Sgd,
            global_seed: 379,
            augmentation: AugmentationConfig::default(),
            model_selection: ModelSelection::BestValTop1,
            drop_empty_frames: false,
            record_test_curve: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.augmentation
            .validate()
            .map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("train config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Model fields of a run config file; `num_classes` comes from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    pub dropout: f64,
    pub max_frames: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        Self {
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            attention_heads: m.attention_heads,
            feedforward_dim: m.feedforward_dim,
            dropout: m.dropout,
            max_frames: m.max_frames,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim: FRAME_DIM,
            num_classes,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            attention_heads: self.attention_heads,
            feedforward_dim: self.feedforward_dim,
            dropout: self.dropout,
            max_frames: self.max_frames,
        }
    }
}

/// The TOML file accepted by `train --config`.
///
/// ```toml
/// [model]
/// encoder_layers = 6
///
/// [train]
/// epochs = 100
/// learning_rate = 0.001
/// global_seed = 379
///
/// [train.augmentation.rotate]
/// probability = 0.5
/// max_degrees = 13.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::new(100).validate().unwrap();
        TrainConfig::default().validate().unwrap();
        assert_eq!(ModelConfig::new(100).width() / 9, 12);
    }

    #[test]
    fn invalid_model_configs() {
        let mut c = ModelConfig::new(10);
        c.attention_heads = 7;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(10);
        c.input_dim = 100;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(10);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(ModelConfig::new(0).validate().is_err());
    }

    #[test]
    fn invalid_train_configs() {
        let t = TrainConfig { epochs: 0, ..Default::default() };
        assert!(t.validate().is_err());
        let t = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn run_config_toml_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_toml("[model]\nencoder_layers = 2\n[train]\nepochs = 3\nlearning_rate = 0.01\nglobal_seed = 1\n").unwrap();
        assert_eq!(partial.model.encoder_layers, 2);
        assert_eq!(partial.model.decoder_layers, 6);
        assert_eq!(partial.train.epochs, 3);
        assert_eq!(partial.train.augmentation, AugmentationConfig::default());
    }
}
