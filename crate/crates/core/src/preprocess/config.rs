use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub probability: f64,
    pub max_degrees: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioParams {
    pub probability: f64,
    pub max_ratio: f64,
}

/// How per-sample augmentation seeds are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedPolicy {
    /// `hash(global_seed, epoch, sample_index)`; see [`super::sample_seed`].
    #[default]
    #[serde(rename = "per-sample-derived")]
    PerSampleDerived,
}

/// Probabilities and magnitudes of the four skeletal augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub rotate: RotationParams,
    pub squeeze: RatioParams,
    pub perspective: RatioParams,
    pub arm_rotate: RotationParams,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotate: RotationParams { probability: 0.5, max_degrees: 13.0 },
            squeeze: RatioParams { probability: 0.5, max_ratio: 0.15 },
            perspective: RatioParams { probability: 0.5, max_ratio: 0.1 },
            arm_rotate: RotationParams { probability: 0.5, max_degrees: 4.0 },
            seed_policy: SeedPolicy::PerSampleDerived,
        }
    }
}

/// Kind of domain constraint on a numeric field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// In `[0, 1]`.
    Probability,
    /// Any finite non-negative number.
    Degrees,
    /// In `[0, 0.5)`.
    Ratio,
}

impl FieldKind {
    pub fn admits(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                FieldKind::Probability => (0.0..=1.0).contains(&v),
                FieldKind::Degrees => v >= 0.0,
                FieldKind::Ratio => (0.0..0.5).contains(&v),
            }
    }

    pub fn describe(self) -> &'static str {
        match self {
            FieldKind::Probability => "a probability in [0, 1]",
            FieldKind::Degrees => "a non-negative angle in degrees",
            FieldKind::Ratio => "a ratio in [0, 0.5)",
        }
    }
}

impl AugmentationConfig {
    /// Numeric field keys, in file order.
    pub const FIELDS: [&'static str; 8] = [
        "rotate.probability",
        "rotate.max_degrees",
        "squeeze.probability",
        "squeeze.max_ratio",
        "perspective.probability",
        "perspective.max_ratio",
        "arm_rotate.probability",
        "arm_rotate.max_degrees",
    ];

    /// Every augmentation disabled.
    pub fn disabled() -> Self {
        let mut cfg = Self::default();
        for key in Self::FIELDS {
            cfg.set(key, 0.0).expect("known field");
        }
        cfg
    }

    pub fn field_kind(key: &str) -> Option<FieldKind> {
        match key {
            k if k.ends_with(".probability") && Self::FIELDS.contains(&k) => Some(FieldKind::Probability),
            "rotate.max_degrees" | "arm_rotate.max_degrees" => Some(FieldKind::Degrees),
            "squeeze.max_ratio" | "perspective.max_ratio" => Some(FieldKind::Ratio),
            _ => None,
        }
    }

    fn slot_mut(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "rotate.probability" => &mut self.rotate.probability,
            "rotate.max_degrees" => &mut self.rotate.max_degrees,
            "squeeze.probability" => &mut self.squeeze.probability,
            "squeeze.max_ratio" => &mut self.squeeze.max_ratio,
            "perspective.probability" => &mut self.perspective.probability,
            "perspective.max_ratio" => &mut self.perspective.max_ratio,
            "arm_rotate.probability" => &mut self.arm_rotate.probability,
            "arm_rotate.max_degrees" => &mut self.arm_rotate.max_degrees,
            _ => return None,
        })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let mut copy = *self;
        copy.slot_mut(key).map(|v| *v)
    }

    /// Sets a numeric field by key. Range checks happen in [`Self::validate`].
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), PreprocessError> {
        let slot = self
            .slot_mut(key)
            .ok_or_else(|| PreprocessError::Config(format!("unknown key `{key}`")))?;
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        for key in Self::FIELDS {
            let kind = Self::field_kind(key).expect("known field");
            let v = self.get(key).expect("known field");
            if !kind.admits(v) {
                return Err(PreprocessError::Config(format!("`{key}` = {v} must be {}", kind.describe())));
            }
        }
        Ok(())
    }

    /// Parses the flat key-value form. Missing keys keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, PreprocessError> {
        let mut cfg = Self::default();
        for entry in kv::parse(text).map_err(|e| PreprocessError::Config(e.to_string()))? {
            if entry.key == "seed_policy" {
                if entry.value != "per-sample-derived" {
                    return Err(PreprocessError::Config(format!(
                        "line {}: unsupported seed_policy {:?}",
                        entry.line, entry.value
                    )));
                }
                continue;
            }
            let v: f64 = entry.value.parse().map_err(|_| {
                PreprocessError::Config(format!("line {}: `{}` is not a number: {:?}", entry.line, entry.key, entry.value))
            })?;
            cfg.set(&entry.key, v)
                .map_err(|e| PreprocessError::Config(format!("line {}: {e}", entry.line)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in Self::FIELDS {
            out.push_str(&format!("{key} = {}\n", self.get(key).expect("known field")));
        }
        out.push_str("seed_policy = per-sample-derived\n");
        out
    }
}
