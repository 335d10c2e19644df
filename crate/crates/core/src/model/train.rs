use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::PreprocessOptions;
use super::{cross_entropy, evaluate, rank_classes, Checkpoint, EpochRecord, ModelConfig, ModelError, ModelSelection, Network, TrainConfig};
use crate::dataset::{epoch_order, load_split, DatasetIndex, GlossVocabulary, LandmarkCache, Sample, Split};
use crate::preprocess::{augment, sample_seed};
use crate::skeletal::PoseSequence;

/// Separates the dropout stream from the augmentation stream.
const DROPOUT_STREAM: u64 = 0x5d0f_0a17_c3e2_9b41;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights chosen by the selection policy, with the full history.
    pub checkpoint: Checkpoint,
    /// Weights after the last epoch.
    pub last: Network,
}

struct Prepared {
    source_id: String,
    sequence: PoseSequence,
    label: usize,
    position: u64,
}

fn prepare_all(samples: Vec<Sample>, opts: PreprocessOptions) -> Vec<Prepared> {
    samples
        .into_iter()
        .map(|s| Prepared {
            source_id: s.source_id,
            sequence: opts.apply(&s.sequence),
            label: s.label,
            position: s.split_position as u64,
        })
        .collect()
}

/// Trains on a materialized dataset.
pub fn train(
    index: &DatasetIndex,
    vocab: &GlossVocabulary,
    cache: &LandmarkCache,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, ModelError> {
    let train = load_split(index, vocab, cache, Split::Train)?;
    let val = load_split(index, vocab, cache, Split::Validation)?;
    let test = if train_cfg.record_test_curve {
        Some(load_split(index, vocab, cache, Split::Test)?)
    } else {
        None
    };
    train_on_samples(vocab, train, val, test, model_cfg, train_cfg, progress)
}

/// Batch-size-1 SGD with per-sample augmentation. Reproducible given
/// `global_seed`: initialization, visiting order, augmentation and dropout all
/// derive from it.
pub fn train_on_samples(
    vocab: &GlossVocabulary,
    train: Vec<Sample>,
    val: Vec<Sample>,
    test: Option<Vec<Sample>>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, ModelError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if model_cfg.num_classes != vocab.len() {
        return Err(ModelError::VocabularyMismatch(format!(
            "model has {} classes, vocabulary has {} glosses",
            model_cfg.num_classes,
            vocab.len()
        )));
    }
    if train.is_empty() {
        return Err(ModelError::Config("training split is empty".into()));
    }
    let opts = PreprocessOptions {
        drop_empty_frames: train_cfg.drop_empty_frames,
    };
    let train = prepare_all(train, opts);
    let val = prepare_all(val, opts);
    let test = test.map(|t| prepare_all(t, opts));
    let seed = train_cfg.global_seed;

    let mut net = Network::init(model_cfg, seed)?;
    let mut grad = net.zeros_like();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 0..train_cfg.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for i in epoch_order(train.len(), Split::Train, seed, e) {
            let sample = &train[i];
            let augmented = augment(&sample.sequence, &train_cfg.augmentation, sample_seed(seed, e, sample.position))
                .map_err(|err| ModelError::Config(err.to_string()))?;
            let x: Array2<f64> = net.input_matrix(&augmented)?;
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ DROPOUT_STREAM, e, sample.position));
            let (logits, tape) = net.forward_matrix(&x, Some(&mut dropout_rng))?;
            let (loss, dlogits) = cross_entropy(&logits, sample.label);
            if !loss.is_finite() || !logits.iter().all(|v| v.is_finite()) {
                return Err(ModelError::NonFiniteLoss {
                    source_id: sample.source_id.clone(),
                    epoch: epoch + 1,
                });
            }
            loss_sum += loss;
            if rank_classes(logits.as_slice().expect("contiguous logits"))[0] == sample.label {
                correct += 1;
            }
            grad.fill_zero();
            net.backward(&tape, &dlogits, &mut grad);
            net.sgd_step(&grad, train_cfg.learning_rate);
        }

        let score = |set: &[Prepared]| -> Result<Option<super::EvalMetrics>, ModelError> {
            if set.is_empty() {
                return Ok(None);
            }
            evaluate(&net, set.iter().map(|p| (&p.sequence, p.label))).map(Some)
        };
        let val_metrics = score(&val)?;
        let test_metrics = match &test {
            Some(t) => score(t)?,
            None => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_top1: correct as f64 / train.len() as f64,
            val_top1_macro: val_metrics.as_ref().map(|m| m.top1_macro),
            val_top1_micro: val_metrics.as_ref().map(|m| m.top1_micro),
            test_top1_macro: test_metrics.as_ref().map(|m| m.top1_macro),
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        progress(&record);
        if let (ModelSelection::BestValTop1, Some(v)) = (train_cfg.model_selection, record.val_top1_macro) {
            // Strictly greater: ties keep the earlier epoch.
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, epoch + 1, net.clone()));
            }
        }
        history.push(record);
    }

    let last_epoch = train_cfg.epochs;
    let (selected, selected_epoch) = match best {
        Some((_, epoch, weights)) => (weights, epoch),
        None => (net.clone(), last_epoch),
    };
    let mut checkpoint = Checkpoint::new(selected, vocab.clone())?;
    checkpoint.train_config_digest = train_cfg.digest();
    checkpoint.preprocess = opts;
    checkpoint.history = history;
    checkpoint.selected_epoch = Some(selected_epoch);
    Ok(TrainOutcome { checkpoint, last: net })
}
