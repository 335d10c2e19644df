//! Transformer classifier over skeletal frame vectors: weights, training,
//! evaluation, checkpoints and latency accounting.

mod bench;
mod checkpoint;
mod config;
pub(crate) mod layers;
mod metrics;
mod network;
mod params;
mod predict;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{benchmark_inference, synthetic_sequence, Environment, LatencyCell, LatencyReport};
pub use checkpoint::{history_path, Checkpoint, EpochRecord, PreprocessOptions};
pub use config::{ModelConfig, ModelSelection, ModelSection, Optimizer, RunConfig, TrainConfig};
pub use layers::{FeedForward, LayerNorm, Linear, MultiHeadAttention};
pub use metrics::{evaluate, evaluate_split, tally, EvalMetrics};
pub use network::{cross_entropy, DecoderLayer, EncoderLayer, Network, Tape};
pub use params::{count_parameters, layer_parameters};
pub use predict::{predict_topk, rank_classes, softmax, Prediction, RankedGloss};
pub use train::{train, train_on_samples, TrainOutcome};

use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dimension mismatch: model expects {expected} values per frame, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("k must be in 1..={num_classes}, got {k}")]
    InvalidK { k: usize, num_classes: usize },
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("non-finite loss on sample `{source_id}` (epoch {epoch})")]
    NonFiniteLoss { source_id: String, epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
