//! Checkpoints: one safetensors archive with every weight tensor (f64,
//! little-endian) and the model config, vocabulary, preprocessing options and
//! train-config digest as string metadata. The metrics history lives next to
//! it in `<checkpoint>.metrics.jsonl`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, Network};
use crate::dataset::GlossVocabulary;
use crate::preprocess::normalize_sequence;
use crate::skeletal::PoseSequence;

const FORMAT_TAG: &str = "spoterkit-checkpoint";
const FORMAT_VERSION: &str = "1";

/// Model-side preprocessing applied before every forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub drop_empty_frames: bool,
}

impl PreprocessOptions {
    /// Drops empty frames when enabled (unless that would leave nothing),
    /// then normalizes.
    pub fn apply(&self, seq: &PoseSequence) -> PoseSequence {
        let filtered = if self.drop_empty_frames {
            seq.without_empty_frames()
        } else {
            None
        };
        normalize_sequence(filtered.as_ref().unwrap_or(seq)).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Top-1 on augmented training samples, measured during the epoch.
    pub train_top1: f64,
    pub val_top1_macro: Option<f64>,
    pub val_top1_micro: Option<f64>,
    pub test_top1_macro: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub vocabulary: GlossVocabulary,
    pub train_config_digest: String,
    pub preprocess: PreprocessOptions,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept, when known.
    pub selected_epoch: Option<usize>,
}

/// `<checkpoint>.metrics.jsonl`
pub fn history_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".metrics.jsonl");
    checkpoint.with_file_name(name)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| ModelError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

impl Checkpoint {
    pub fn new(network: Network, vocabulary: GlossVocabulary) -> Result<Self, ModelError> {
        if network.config().num_classes != vocabulary.len() {
            return Err(ModelError::VocabularyMismatch(format!(
                "model has {} classes, vocabulary has {} glosses",
                network.config().num_classes,
                vocabulary.len()
            )));
        }
        Ok(Self {
            network,
            vocabulary,
            train_config_digest: String::new(),
            preprocess: PreprocessOptions::default(),
            history: Vec::new(),
            selected_epoch: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    /// Serialized archive (without the history file).
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let tensors = self.network.named_tensors();
        let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
            .into_iter()
            .map(|(name, t)| {
                let bytes = t.iter().flat_map(|v| v.to_le_bytes()).collect();
                (name, t.shape().to_vec(), bytes)
            })
            .collect();
        let views = buffers
            .iter()
            .map(|(name, shape, bytes)| {
                TensorView::new(Dtype::F64, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| ModelError::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let meta: HashMap<String, String> = self.metadata().into_iter().collect();
        safetensors::tensor::serialize(views, &Some(meta)).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), FORMAT_TAG.to_string());
        meta.insert("format_version".to_string(), FORMAT_VERSION.to_string());
        meta.insert("model_config".to_string(), json(self.network.config()));
        meta.insert("vocabulary".to_string(), json(&self.vocabulary));
        meta.insert("train_config_digest".to_string(), self.train_config_digest.clone());
        meta.insert("preprocess".to_string(), json(&self.preprocess));
        if let Some(e) = self.selected_epoch {
            meta.insert("selected_epoch".to_string(), e.to_string());
        }
        meta
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
        let meta = header
            .metadata()
            .as_ref()
            .ok_or_else(|| bad("archive has no metadata".into()))?;
        let field = |key: &str| meta.get(key).ok_or_else(|| bad(format!("metadata field `{key}` missing")));
        if field("format")? != FORMAT_TAG {
            return Err(bad("not a spoterkit checkpoint".into()));
        }
        if field("format_version")? != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {}", field("format_version")?)));
        }
        let config: ModelConfig =
            serde_json::from_str(field("model_config")?).map_err(|e| bad(format!("model_config: {e}")))?;
        let vocabulary: GlossVocabulary =
            serde_json::from_str(field("vocabulary")?).map_err(|e| bad(format!("vocabulary: {e}")))?;
        let preprocess: PreprocessOptions =
            serde_json::from_str(field("preprocess")?).map_err(|e| bad(format!("preprocess: {e}")))?;
        let selected_epoch = meta.get("selected_epoch").and_then(|s| s.parse().ok());

        let archive = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
        let mut tensors = HashMap::new();
        for (name, view) in archive.tensors() {
            if view.dtype() != Dtype::F64 {
                return Err(bad(format!("tensor `{name}` has dtype {:?}, expected F64", view.dtype())));
            }
            let values: Vec<f64> = view
                .data()
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let array = ArrayD::from_shape_vec(IxDyn(view.shape()), values).map_err(|e| bad(e.to_string()))?;
            tensors.insert(name, array);
        }
        let mut network = Network::zeros(&config)?;
        network.load_named(tensors)?;
        let mut ckpt = Checkpoint::new(network, vocabulary)?;
        ckpt.train_config_digest = field("train_config_digest")?.clone();
        ckpt.preprocess = preprocess;
        ckpt.selected_epoch = selected_epoch;
        Ok(ckpt)
    }

    /// Writes the archive and the history file; returns the model id.
    pub fn save(&self, path: &Path) -> Result<String, ModelError> {
        let bytes = self.to_bytes()?;
        atomic_write(path, &bytes)?;
        let mut lines = String::new();
        for record in &self.history {
            lines.push_str(&serde_json::to_string(record).expect("record serializes"));
            lines.push('\n');
        }
        atomic_write(&history_path(path), lines.as_bytes())?;
        Ok(self.model_id())
    }

    /// Loads the archive and, when present, its history file.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let mut ckpt = Self::from_bytes(&bytes)?;
        let hist = history_path(path);
        if hist.is_file() {
            let text = std::fs::read_to_string(&hist).map_err(io_err(&hist))?;
            ckpt.history = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    serde_json::from_str(l)
                        .map_err(|e| ModelError::Checkpoint(format!("{}:{}: {e}", hist.display(), i + 1)))
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(ckpt)
    }

    /// Content hash over metadata and weights: 16 hex chars. Independent of
    /// the archive's header layout.
    pub fn model_id(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.metadata() {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            h.update((v.len() as u64).to_le_bytes());
            h.update(v.as_bytes());
        }
        let mut tensors = self.network.named_tensors();
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, t) in tensors {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Applies this checkpoint's preprocessing to a raw sequence.
    pub fn prepare(&self, seq: &PoseSequence) -> PoseSequence {
        self.preprocess.apply(seq)
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("metadata serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Checkpoint {
        let cfg = ModelConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            feedforward_dim: 8,
            max_frames: 4,
            ..ModelConfig::new(3)
        };
        let vocab = GlossVocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut c = Checkpoint::new(Network::init(&cfg, 5).unwrap(), vocab).unwrap();
        c.train_config_digest = "abc".into();
        c.selected_epoch = Some(2);
        c
    }

    #[test]
    fn bytes_round_trip_is_exact() {
        let c = tiny();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.model_id(), c.model_id());
    }

    #[test]
    fn file_round_trip_with_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let mut c = tiny();
        c.history.push(EpochRecord {
            epoch: 1,
            train_loss: 0.1 + 0.2,
            train_top1: 0.5,
            val_top1_macro: Some(1.0 / 3.0),
            val_top1_micro: None,
            test_top1_macro: None,
            elapsed_ms: 1.5,
        });
        let id = c.save(&path).unwrap();
        assert_eq!(id, c.model_id());
        assert!(history_path(&path).ends_with("m.safetensors.metrics.jsonl"));
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn vocabulary_size_must_match() {
        let c = tiny();
        let vocab = GlossVocabulary::new(vec!["a".into()]).unwrap();
        assert!(matches!(
            Checkpoint::new(c.network, vocab),
            Err(ModelError::VocabularyMismatch(_))
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(ModelError::Checkpoint(_))));
    }
}
