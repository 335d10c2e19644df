use serde::Serialize;

use super::{rank_classes, Checkpoint, ModelError, Network};
use crate::dataset::{iterate_split, DatasetError, DatasetIndex, LandmarkCache, Split};
use crate::skeletal::PoseSequence;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    /// Mean of per-class top-1 accuracy over classes present in the split.
    pub top1_macro: f64,
    pub top1_micro: f64,
    pub top5_micro: f64,
    /// Indexed by class; `None` for classes with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub samples: usize,
}

/// Scores metrics from `(scores, true class)` pairs. Scores may be logits or
/// probabilities; only their order matters. Ties rank by ascending index.
pub fn tally<'a>(num_classes: usize, outcomes: impl IntoIterator<Item = (&'a [f64], usize)>) -> EvalMetrics {
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    let mut top5 = 0usize;
    let mut samples = 0usize;
    for (scores, label) in outcomes {
        let order = rank_classes(scores);
        totals[label] += 1;
        samples += 1;
        if order[0] == label {
            hits[label] += 1;
        }
        if order.iter().take(5).any(|&c| c == label) {
            top5 += 1;
        }
    }
    let per_class_accuracy: Vec<Option<f64>> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    let ratio = |n: usize| if samples == 0 { 0.0 } else { n as f64 / samples as f64 };
    EvalMetrics {
        top1_macro: if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        },
        top1_micro: ratio(hits.iter().sum()),
        top5_micro: ratio(top5),
        per_class_accuracy,
        samples,
    }
}

/// Evaluates already normalized sequences in inference mode.
pub fn evaluate<'a>(
    network: &Network,
    samples: impl IntoIterator<Item = (&'a PoseSequence, usize)>,
) -> Result<EvalMetrics, ModelError> {
    let mut scored = Vec::new();
    for (seq, label) in samples {
        scored.push((network.forward(seq)?.to_vec(), label));
    }
    Ok(tally(
        network.config().num_classes,
        scored.iter().map(|(s, l)| (s.as_slice(), *l)),
    ))
}

/// Evaluates one split of a materialized dataset against the checkpoint's
/// own vocabulary.
pub fn evaluate_split(
    checkpoint: &Checkpoint,
    index: &DatasetIndex,
    cache: &LandmarkCache,
    split: Split,
) -> Result<EvalMetrics, ModelError> {
    let mut prepared = Vec::new();
    for sample in iterate_split(index, &checkpoint.vocabulary, cache, split, 0, 0) {
        let sample = sample.map_err(|e| match e {
            DatasetError::UnknownGloss { gloss, source_id } => ModelError::VocabularyMismatch(format!(
                "entry `{source_id}` has gloss `{gloss}`, which the checkpoint does not know"
            )),
            other => other.into(),
        })?;
        prepared.push((checkpoint.prepare(&sample.sequence), sample.label));
    }
    evaluate(&checkpoint.network, prepared.iter().map(|(s, l)| (s, *l)))
}
