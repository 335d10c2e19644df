//! WLASL-style dataset indexes, the landmark cache and split iteration.

mod cache;
pub mod fixture;
mod index;

use std::path::PathBuf;

use thiserror::Error;

pub use cache::{
    epoch_order, iterate_split, load_split, materialize, LandmarkCache, MaterializationReport, Sample, SplitIter,
    LANDMARK_EXTENSION,
};
pub use fixture::{FixtureLayout, FixtureSpec, SyntheticFixture, FIXTURE_GLOSSES};
pub use index::{
    flat_index_json, load_index, parse_index, DatasetIndex, GlossVocabulary, IndexEntry, IndexStats, Provenance, Split,
};

use crate::skeletal::SkeletalError;

/// Number of glosses in the WLASL100 subset.
pub const DEFAULT_SUBSET: usize = 100;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("index format: {0}")]
    Format(String),
    #[error("entry `{source_id}` has no split tag")]
    MissingSplit { source_id: String },
    #[error("entry `{source_id}` has gloss `{gloss}`, which is not in the vocabulary")]
    UnknownGloss { gloss: String, source_id: String },
    #[error("landmarks for `{source_id}` not cached (expected {})", path.display())]
    CacheMiss { source_id: String, path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Landmarks(#[from] SkeletalError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_on_disk() -> (tempfile::TempDir, FixtureLayout, SyntheticFixture) {
        let dir = tempfile::tempdir().unwrap();
        let fx = SyntheticFixture::generate(&FixtureSpec::default());
        let layout = fx.write(dir.path()).unwrap();
        (dir, layout, fx)
    }

    #[test]
    fn splits_partition_the_index() {
        let (_d, layout, fx) = fixture_on_disk();
        let (index, vocab) = load_index(&layout.index, Some(DEFAULT_SUBSET)).unwrap();
        assert_eq!(vocab.len(), 5);
        let total: usize = Split::ALL.iter().map(|s| index.split_len(*s)).sum();
        assert_eq!(total, fx.entries.len());
        let mut ids: Vec<_> = index.entries.iter().map(|e| &e.source_id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), fx.entries.len());
    }

    #[test]
    fn evaluation_splits_are_unshuffled() {
        let (_d, layout, _) = fixture_on_disk();
        let (index, vocab) = load_index(&layout.index, None).unwrap();
        let a: Vec<_> = iterate_split(&index, &vocab, &layout.cache, Split::Test, 1, 0)
            .map(|s| s.unwrap().source_id)
            .collect();
        let b: Vec<_> = iterate_split(&index, &vocab, &layout.cache, Split::Test, 99, 7)
            .map(|s| s.unwrap().source_id)
            .collect();
        let in_index: Vec<_> = index.split(Split::Test).map(|e| e.source_id.clone()).collect();
        assert_eq!(a, b);
        assert_eq!(a, in_index);
    }

    #[test]
    fn train_shuffle_is_a_function_of_seed_and_epoch() {
        let (_d, layout, _) = fixture_on_disk();
        let (index, vocab) = load_index(&layout.index, None).unwrap();
        let run = |seed, epoch| -> Vec<String> {
            iterate_split(&index, &vocab, &layout.cache, Split::Train, seed, epoch)
                .map(|s| s.unwrap().source_id)
                .collect()
        };
        assert_eq!(run(5, 0), run(5, 0));
        let (x, y) = (run(5, 0), run(6, 0));
        assert_ne!(x, y);
        let (mut xs, mut ys) = (x.clone(), y);
        xs.sort();
        ys.sort();
        assert_eq!(xs, ys);
        assert_ne!(run(5, 0), run(5, 1));
    }

    #[test]
    fn cache_miss_names_entry() {
        let (_d, layout, fx) = fixture_on_disk();
        let (index, vocab) = load_index(&layout.index, None).unwrap();
        let victim = &fx.entries[0].source_id;
        std::fs::remove_file(layout.cache.path_for(victim)).unwrap();
        let err = load_split(&index, &vocab, &layout.cache, Split::Train).unwrap_err();
        assert!(matches!(err, DatasetError::CacheMiss { ref source_id, .. } if source_id == victim));
    }

    #[test]
    fn materialize_all_cached_and_idempotent() {
        let (d, layout, fx) = fixture_on_disk();
        let (index, _) = load_index(&layout.index, None).unwrap();
        let report = materialize(&index, &layout.cache, d.path(), None);
        assert_eq!(
            report,
            MaterializationReport {
                extracted: 0,
                cached: fx.entries.len(),
                missing: 0,
                failures: vec![]
            }
        );
        assert_eq!(materialize(&index, &layout.cache, d.path(), None), report);
    }

    #[test]
    fn cached_sequence_is_bit_identical() {
        let (_d, layout, fx) = fixture_on_disk();
        let back = layout.cache.get(&fx.sequences[3].source_id).unwrap();
        assert_eq!(back, fx.sequences[3]);
    }
}
