//! Procedurally generated skeletal clips for five made-up glosses.
//!
//! Each gloss is a distinct motion of the hands in front of a static torso,
//! with random phase, amplitude, length, jitter and occasional hand dropouts.
//! Used by tests and demos so nothing needs to be downloaded.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{flat_index_json, DatasetError, GlossVocabulary, IndexEntry, LandmarkCache, Split};
use crate::skeletal::schema::{
    HAND_SLOTS, LEFT_EAR, LEFT_ELBOW, LEFT_EYE, LEFT_SHOULDER, LEFT_WRIST, NECK, NOSE, RIGHT_EAR, RIGHT_ELBOW, RIGHT_EYE,
    RIGHT_SHOULDER, RIGHT_WRIST,
};
use crate::skeletal::{LandmarkMap, Point, PoseSequence, Side, SkeletalFrame};

pub const FIXTURE_GLOSSES: [&str; 5] = ["wave", "nod", "circle", "open", "clap"];
pub const FIXTURE_FPS: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub train_per_gloss: usize,
    pub val_per_gloss: usize,
    pub test_per_gloss: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            train_per_gloss: 8,
            val_per_gloss: 2,
            test_per_gloss: 2,
            min_frames: 16,
            max_frames: 28,
            seed: 2023,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub vocabulary: GlossVocabulary,
    pub entries: Vec<IndexEntry>,
    /// Same order as `entries`.
    pub sequences: Vec<PoseSequence>,
}

/// Paths of a fixture written to disk.
#[derive(Debug, Clone)]
pub struct FixtureLayout {
    pub index: PathBuf,
    pub cache_root: PathBuf,
    pub cache: LandmarkCache,
}

impl SyntheticFixture {
    pub fn generate(spec: &FixtureSpec) -> Self {
        let vocabulary =
            GlossVocabulary::new(FIXTURE_GLOSSES.iter().map(|g| g.to_string()).collect()).expect("unique glosses");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut entries = Vec::new();
        let mut sequences = Vec::new();
        let splits = [
            (Split::Train, spec.train_per_gloss),
            (Split::Validation, spec.val_per_gloss),
            (Split::Test, spec.test_per_gloss),
        ];
        for (split, count) in splits {
            for i in 0..count {
                for (g, gloss) in FIXTURE_GLOSSES.iter().enumerate() {
                    let source_id = format!("{gloss}-{}-{i:02}", split.as_str());
                    let frames = rng.gen_range(spec.min_frames..=spec.max_frames.max(spec.min_frames));
                    let seq = clip(g, frames, &mut rng, &source_id, gloss);
                    entries.push(IndexEntry {
                        source_id: source_id.clone(),
                        gloss: gloss.to_string(),
                        split,
                        video: format!("{source_id}.mp4"),
                    });
                    sequences.push(seq);
                }
            }
        }
        Self {
            vocabulary,
            entries,
            sequences,
        }
    }

    /// Writes `index.json` and a populated cache keyed by the default
    /// landmark map, so the fixture behaves like a materialized dataset.
    pub fn write(&self, dir: &Path) -> Result<FixtureLayout, DatasetError> {
        std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let index = dir.join("index.json");
        std::fs::write(&index, flat_index_json(&self.vocabulary, &self.entries)).map_err(|source| {
            DatasetError::Io {
                path: index.clone(),
                source,
            }
        })?;
        let cache_root = dir.join("cache");
        let cache = LandmarkCache::new(&cache_root, LandmarkMap::mediapipe_holistic().digest());
        for seq in &self.sequences {
            cache.put(seq)?;
        }
        Ok(FixtureLayout {
            index,
            cache_root,
            cache,
        })
    }
}

fn jitter(rng: &mut ChaCha8Rng, p: Point, sigma: f64) -> Point {
    [p[0] + rng.gen_range(-sigma..sigma), p[1] + rng.gen_range(-sigma..sigma)]
}

/// 21 hand points around `wrist`, fingers fanned upward; `openness` in [0,1]
/// scales finger extension.
fn hand_points(wrist: Point, openness: f64, tilt: f64, size: f64) -> [Point; HAND_SLOTS] {
    let mut pts = [[0.0; 2]; HAND_SLOTS];
    pts[0] = wrist;
    for finger in 0..5 {
        let angle = tilt + (finger as f64 - 2.0) * 0.35 - std::f64::consts::FRAC_PI_2;
        let reach = if finger == 0 { 0.7 } else { 1.0 } * (0.35 + 0.65 * openness);
        for joint in 0..4 {
            let r = size * (0.45 + 0.2 * joint as f64) * if joint == 0 { 1.0 } else { reach };
            pts[1 + finger * 4 + joint] = [wrist[0] + r * angle.cos(), wrist[1] + r * angle.sin()];
        }
    }
    pts
}

fn clip(gloss: usize, frames: usize, rng: &mut ChaCha8Rng, source_id: &str, label: &str) -> PoseSequence {
    let center = [rng.gen_range(0.45..0.55), rng.gen_range(0.45..0.55)];
    let scale = rng.gen_range(0.8..1.2);
    let phase = rng.gen_range(0.0..TAU);
    let amp = rng.gen_range(0.8..1.2);
    let at = |dx: f64, dy: f64| -> Point { [center[0] + dx * scale, center[1] + dy * scale] };
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let s = t as f64 / (frames - 1).max(1) as f64;
        let w = TAU * s + phase;
        // Hand wrist offsets (relative to the torso centre) and hand shape.
        let (right, left, open) = match gloss {
            0 => ([0.12 + 0.08 * amp * w.sin(), -0.15], [-0.12, 0.12], 1.0),
            1 => ([0.12, -0.05 + 0.1 * amp * w.sin()], [-0.12, 0.12], 0.5),
            2 => ([0.08 + 0.07 * amp * w.cos(), -0.05 + 0.07 * amp * w.sin()], [-0.12, 0.12], 0.8),
            3 => ([0.1, -0.02], [-0.1, -0.02], 0.5 + 0.5 * (w).sin()),
            _ => {
                let gap = 0.04 + 0.08 * amp * (0.5 + 0.5 * (2.0 * w).cos());
                ([gap, -0.05], [-gap, -0.05], 0.6)
            }
        };
        let mut f = SkeletalFrame::empty();
        let put = |f: &mut SkeletalFrame, slot: usize, p: Point, rng: &mut ChaCha8Rng| {
            f.set(slot, jitter(rng, p, 0.003));
        };
        put(&mut f, NOSE, at(0.0, -0.22), rng);
        put(&mut f, LEFT_EYE, at(-0.025, -0.24), rng);
        put(&mut f, RIGHT_EYE, at(0.025, -0.24), rng);
        put(&mut f, LEFT_EAR, at(-0.05, -0.23), rng);
        put(&mut f, RIGHT_EAR, at(0.05, -0.23), rng);
        put(&mut f, LEFT_SHOULDER, at(-0.1, -0.1), rng);
        put(&mut f, RIGHT_SHOULDER, at(0.1, -0.1), rng);
        let ls = f.get(LEFT_SHOULDER).unwrap_or_default();
        let rs = f.get(RIGHT_SHOULDER).unwrap_or_default();
        f.set(NECK, [(ls[0] + rs[0]) / 2.0, (ls[1] + rs[1]) / 2.0]);
        let rw = at(right[0], right[1]);
        let lw = at(left[0], left[1]);
        put(&mut f, RIGHT_WRIST, rw, rng);
        put(&mut f, LEFT_WRIST, lw, rng);
        put(&mut f, RIGHT_ELBOW, [(rs[0] + rw[0]) / 2.0 + 0.03, (rs[1] + rw[1]) / 2.0 + 0.06], rng);
        put(&mut f, LEFT_ELBOW, [(ls[0] + lw[0]) / 2.0 - 0.03, (ls[1] + lw[1]) / 2.0 + 0.06], rng);
        for side in Side::BOTH {
            // Occasional dropped hand detection.
            if rng.gen::<f64>() < 0.05 {
                continue;
            }
            let wrist = if side == Side::Right { rw } else { lw };
            let tilt = if side == Side::Right { 0.2 } else { -0.2 };
            let pts = hand_points(wrist, open, tilt, 0.05 * scale);
            for (j, p) in pts.iter().enumerate() {
                let slot = side.hand_group().slots().start + j;
                put(&mut f, slot, *p, rng);
            }
        }
        out.push(f);
    }
    PoseSequence::new(out, FIXTURE_FPS, Some(label.to_string()), source_id).expect("non-empty clip")
}
