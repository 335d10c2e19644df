use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DatasetError, DatasetIndex, GlossVocabulary, IndexEntry, Split};
use crate::preprocess::sample_seed;
use crate::skeletal::{extract_landmarks, read_sequence, write_sequence_as, EstimatorAdapter, LandmarkFormat, PoseSequence};

pub const LANDMARK_EXTENSION: &str = "landmarks";

/// Landmark files under `<root>/<key>/<source_id>.landmarks`, where `key` is
/// the landmark map digest (plus the estimator version when it differs from
/// the map's).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkCache {
    root: PathBuf,
    key: String,
}

impl LandmarkCache {
    pub fn new(root: impl Into<PathBuf>, key: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            key: key.into(),
        }
    }

    pub fn for_estimator(root: impl Into<PathBuf>, estimator: &dyn EstimatorAdapter) -> Self {
        Self::new(root, estimator.cache_key())
    }

    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.key)
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn path_for(&self, source_id: &str) -> PathBuf {
        self.dir().join(format!("{source_id}.{LANDMARK_EXTENSION}"))
    }

    pub fn contains(&self, source_id: &str) -> bool {
        self.path_for(source_id).is_file()
    }

    pub fn get(&self, source_id: &str) -> Result<PoseSequence, DatasetError> {
        let path = self.path_for(source_id);
        if !path.is_file() {
            return Err(DatasetError::CacheMiss {
                source_id: source_id.to_string(),
                path,
            });
        }
        Ok(read_sequence(&path)?)
    }

    /// Atomic write (temp file + rename).
    pub fn put(&self, seq: &PoseSequence) -> Result<PathBuf, DatasetError> {
        let dir = self.dir();
        std::fs::create_dir_all(&dir).map_err(|source| DatasetError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = self.path_for(&seq.source_id);
        write_sequence_as(seq, &path, LandmarkFormat::Structured)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MaterializationReport {
    pub extracted: usize,
    pub cached: usize,
    pub missing: usize,
    /// (source_id, reason) for each missing entry, in index order.
    pub failures: Vec<(String, String)>,
}

/// Ensures every entry has a cached landmark file. Failures are collected
/// in the report rather than aborting the run. Without an estimator only
/// cache hits are possible.
pub fn materialize(
    index: &DatasetIndex,
    cache: &LandmarkCache,
    videos: &Path,
    mut estimator: Option<&mut dyn EstimatorAdapter>,
) -> MaterializationReport {
    let mut report = MaterializationReport::default();
    for entry in &index.entries {
        if cache.contains(&entry.source_id) {
            report.cached += 1;
            continue;
        }
        let result = match estimator.as_deref_mut() {
            Some(est) => extract_entry(entry, cache, videos, est),
            None => Err("no estimator configured and entry not cached".to_string()),
        };
        match result {
            Ok(()) => report.extracted += 1,
            Err(reason) => {
                log::warn!("{}: {reason}", entry.source_id);
                report.missing += 1;
                report.failures.push((entry.source_id.clone(), reason));
            }
        }
    }
    report
}

fn extract_entry(
    entry: &IndexEntry,
    cache: &LandmarkCache,
    videos: &Path,
    estimator: &mut dyn EstimatorAdapter,
) -> Result<(), String> {
    let mut seq = extract_landmarks(&videos.join(&entry.video), estimator).map_err(|e| e.to_string())?;
    seq.source_id = entry.source_id.clone();
    seq.label = Some(entry.gloss.clone());
    cache.put(&seq).map(|_| ()).map_err(|e| e.to_string())
}

/// Visiting order for one epoch: identity for evaluation splits, a seeded
/// permutation for training. Pure in `(len, seed, epoch)`.
pub fn epoch_order(len: usize, split: Split, shuffle_seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if split == Split::Train {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(shuffle_seed, epoch, u64::MAX));
        order.shuffle(&mut rng);
    }
    order
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub source_id: String,
    pub sequence: PoseSequence,
    pub label: usize,
    /// Position of the entry within its split in index order; stable across
    /// epochs and independent of shuffling.
    pub split_position: usize,
}

/// Streams one split. Labels are resolved against `vocab`, which may come
/// from a checkpoint rather than the index.
pub struct SplitIter<'a> {
    entries: Vec<&'a IndexEntry>,
    order: std::vec::IntoIter<usize>,
    cache: &'a LandmarkCache,
    vocab: &'a GlossVocabulary,
}

impl Iterator for SplitIter<'_> {
    type Item = Result<Sample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        let pos = self.order.next()?;
        let entry = self.entries[pos];
        Some(load_sample(entry, pos, self.cache, self.vocab))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.order.size_hint()
    }
}

fn load_sample(
    entry: &IndexEntry,
    pos: usize,
    cache: &LandmarkCache,
    vocab: &GlossVocabulary,
) -> Result<Sample, DatasetError> {
    let label = vocab.index_of(&entry.gloss).ok_or_else(|| DatasetError::UnknownGloss {
        gloss: entry.gloss.clone(),
        source_id: entry.source_id.clone(),
    })?;
    let mut sequence = cache.get(&entry.source_id)?;
    sequence.label = Some(entry.gloss.clone());
    Ok(Sample {
        source_id: entry.source_id.clone(),
        sequence,
        label,
        split_position: pos,
    })
}

pub fn iterate_split<'a>(
    index: &'a DatasetIndex,
    vocab: &'a GlossVocabulary,
    cache: &'a LandmarkCache,
    split: Split,
    shuffle_seed: u64,
    epoch: u64,
) -> SplitIter<'a> {
    let entries: Vec<&IndexEntry> = index.split(split).collect();
    let order = epoch_order(entries.len(), split, shuffle_seed, epoch);
    SplitIter {
        entries,
        order: order.into_iter(),
        cache,
        vocab,
    }
}

/// Loads a whole split in index order.
pub fn load_split(
    index: &DatasetIndex,
    vocab: &GlossVocabulary,
    cache: &LandmarkCache,
    split: Split,
) -> Result<Vec<Sample>, DatasetError> {
    iterate_split(index, vocab, cache, split, 0, 0).collect()
}
