use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, ModelError};
use crate::skeletal::PoseSequence;

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Class indices sorted by descending score; equal scores keep ascending index.
pub fn rank_classes(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGloss {
    pub class_index: usize,
    pub gloss: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// The top-k entries, descending by probability.
    pub ranked: Vec<RankedGloss>,
    /// Full softmax over every class, in vocabulary order.
    pub distribution: Vec<f64>,
}

/// Top-k glosses for an already normalized sequence. Probabilities come from
/// the full softmax and are not renormalized over the k entries.
pub fn predict_topk(seq: &PoseSequence, checkpoint: &Checkpoint, k: usize) -> Result<Prediction, ModelError> {
    let num_classes = checkpoint.network.config().num_classes;
    if k == 0 || k > num_classes {
        return Err(ModelError::InvalidK { k, num_classes });
    }
    let probs = softmax(&checkpoint.network.forward(seq)?);
    let distribution = probs.to_vec();
    let ranked = rank_classes(&distribution)
        .into_iter()
        .take(k)
        .map(|class_index| RankedGloss {
            class_index,
            gloss: checkpoint.vocabulary.gloss(class_index).to_string(),
            probability: distribution[class_index],
        })
        .collect();
    Ok(Prediction { ranked, distribution })
}
