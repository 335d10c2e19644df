//! Random search over augmentation settings with a resumable trial ledger.
//!
//! Space file: one line per augmentation key, unlisted keys stay at their
//! defaults.
//!
//! ```text
//! rotate.probability = range: 0, 1
//! rotate.max_degrees = choice: 5, 10, 15
//! squeeze.max_ratio  = fixed: 0.15
//! ```

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetIndex, GlossVocabulary, LandmarkCache, Split};
use crate::kv;
use crate::model::{evaluate_split, train, ModelConfig, TrainConfig};
use crate::preprocess::AugmentationConfig;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const BEST_FILE: &str = "best.json";
pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("search space: {0}")]
    Space(String),
    #[error("ledger: {0}")]
    Ledger(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldSpace {
    Fixed { value: f64 },
    Range { lo: f64, hi: f64 },
    Choice { values: Vec<f64> },
}

impl FieldSpace {
    fn parse(text: &str) -> Result<Self, String> {
        let (marker, rest) = text
            .split_once(':')
            .ok_or_else(|| format!("expected `fixed:`, `range:` or `choice:`, got {text:?}"))?;
        let numbers = rest
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        match (marker.trim(), numbers.as_slice()) {
            ("fixed", [v]) => Ok(FieldSpace::Fixed { value: *v }),
            ("fixed", _) => Err("`fixed:` takes exactly one value".into()),
            ("range", [lo, hi]) => Ok(FieldSpace::Range { lo: *lo, hi: *hi }),
            ("range", _) => Err("`range:` takes exactly two values `lo, hi`".into()),
            ("choice", []) => Err("`choice:` needs at least one value".into()),
            ("choice", vs) => Ok(FieldSpace::Choice { values: vs.to_vec() }),
            (other, _) => Err(format!("unknown marker `{other}:`")),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            FieldSpace::Fixed { value } => vec![*value],
            FieldSpace::Range { lo, hi } => vec![*lo, *hi],
            FieldSpace::Choice { values } => values.clone(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            FieldSpace::Fixed { value } => *value,
            FieldSpace::Range { lo, hi } if lo == hi => *lo,
            FieldSpace::Range { lo, hi } => rng.gen_range(*lo..=*hi),
            FieldSpace::Choice { values } => values[rng.gen_range(0..values.len())],
        }
    }
}

/// Per-field search domain, keyed by augmentation config key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub fields: BTreeMap<String, FieldSpace>,
}

impl Default for SearchSpace {
    /// Every field fixed at its default.
    fn default() -> Self {
        let base = AugmentationConfig::default();
        let fields = AugmentationConfig::FIELDS
            .iter()
            .map(|k| {
                (
                    k.to_string(),
                    FieldSpace::Fixed {
                        value: base.get(k).expect("known field"),
                    },
                )
            })
            .collect();
        Self { fields }
    }
}

impl SearchSpace {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let mut space = Self::default();
        for entry in kv::parse(text).map_err(|e| SweepError::Space(e.to_string()))? {
            let field = FieldSpace::parse(&entry.value)
                .map_err(|m| SweepError::Space(format!("line {}: `{}`: {m}", entry.line, entry.key)))?;
            if AugmentationConfig::field_kind(&entry.key).is_none() {
                return Err(SweepError::Space(format!("line {}: unknown key `{}`", entry.line, entry.key)));
            }
            space.fields.insert(entry.key, field);
        }
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, field: FieldSpace) -> Result<(), SweepError> {
        if AugmentationConfig::field_kind(key).is_none() {
            return Err(SweepError::Space(format!("unknown key `{key}`")));
        }
        self.fields.insert(key.to_string(), field);
        self.validate()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        for (key, field) in &self.fields {
            let kind = AugmentationConfig::field_kind(key)
                .ok_or_else(|| SweepError::Space(format!("unknown key `{key}`")))?;
            if let FieldSpace::Range { lo, hi } = field {
                if lo > hi {
                    return Err(SweepError::Space(format!("`{key}`: empty range [{lo}, {hi}]")));
                }
            }
            if let Some(bad) = field.values().into_iter().find(|v| !kind.admits(*v)) {
                return Err(SweepError::Space(format!("`{key}`: {bad} is outside {}", kind.describe())));
            }
        }
        Ok(())
    }
}

/// `n_trials` independent draws; fixed fields are copied verbatim.
pub fn sample_configs(space: &SearchSpace, n_trials: usize, sweep_seed: u64) -> Result<Vec<AugmentationConfig>, SweepError> {
    space.validate()?;
    if n_trials == 0 {
        return Err(SweepError::Space("n_trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sweep_seed);
    let mut out = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut cfg = AugmentationConfig::default();
        for key in AugmentationConfig::FIELDS {
            if let Some(field) = space.fields.get(key) {
                cfg.set(key, field.draw(&mut rng)).expect("known field");
            }
        }
        out.push(cfg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub sweep_seed: u64,
    pub global_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial_id: usize,
    pub config: AugmentationConfig,
    pub seeds: TrialSeeds,
    /// Validation top-1 macro; present iff completed.
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub wall_clock_ms: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Runs one trial and returns its objective.
pub trait TrialRunner {
    /// Global seed used for every trial's training run.
    fn global_seed(&self) -> u64;

    fn run(&mut self, trial_id: usize, config: &AugmentationConfig, checkpoint: &Path) -> Result<f64, String>;
}

/// Trains on the train split and scores the selected checkpoint on the
/// validation split. The test split is never touched.
pub struct DatasetTrialRunner<'a> {
    pub index: &'a DatasetIndex,
    pub vocab: &'a GlossVocabulary,
    pub cache: &'a LandmarkCache,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TrialRunner for DatasetTrialRunner<'_> {
    fn global_seed(&self) -> u64 {
        self.train.global_seed
    }

    fn run(&mut self, trial_id: usize, config: &AugmentationConfig, checkpoint: &Path) -> Result<f64, String> {
        let cfg = TrainConfig {
            augmentation: *config,
            record_test_curve: false,
            ..self.train.clone()
        };
        let outcome = train(self.index, self.vocab, self.cache, &self.model, &cfg, &mut |r| {
            log::info!("trial {trial_id} epoch {} loss {:.4} val {:?}", r.epoch, r.train_loss, r.val_top1_macro)
        })
        .map_err(|e| e.to_string())?;
        outcome.checkpoint.save(checkpoint).map_err(|e| e.to_string())?;
        let metrics =
            evaluate_split(&outcome.checkpoint, self.index, self.cache, Split::Validation).map_err(|e| e.to_string())?;
        if metrics.samples == 0 {
            return Err("validation split is empty".into());
        }
        Ok(metrics.top1_macro)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub best: Option<TrialRecord>,
    /// Every trial, ordered by id.
    pub ledger: Vec<TrialRecord>,
}

pub fn read_ledger(path: &Path) -> Result<Vec<TrialRecord>, SweepError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => out.push(r),
            // A torn final line from an interrupted write is dropped; the
            // trial simply reruns.
            Err(_) if i + 1 == text.lines().count() => log::warn!("ignoring truncated last ledger line"),
            Err(e) => return Err(SweepError::Ledger(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

fn append_record(path: &Path, record: &TrialRecord) -> Result<(), SweepError> {
    let io = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    file.write_all(line.as_bytes()).map_err(io)?;
    file.sync_data().map_err(io)
}

/// Highest objective; ties go to the lower trial id.
pub fn best_trial(ledger: &[TrialRecord]) -> Option<&TrialRecord> {
    ledger
        .iter()
        .filter(|r| r.status == TrialStatus::Completed)
        .filter_map(|r| r.objective.map(|o| (o, r)))
        .fold(None, |best: Option<(f64, &TrialRecord)>, (o, r)| match best {
            Some((bo, br)) if bo > o || (bo == o && br.trial_id < r.trial_id) => Some((bo, br)),
            _ => Some((o, r)),
        })
        .map(|(_, r)| r)
}

/// Runs (or resumes) a sweep in `out_dir`. Trials already in the ledger are
/// skipped; failed trials are recorded and the sweep continues.
pub fn run_sweep(
    space: &SearchSpace,
    n_trials: usize,
    sweep_seed: u64,
    out_dir: &Path,
    runner: &mut dyn TrialRunner,
) -> Result<SweepOutcome, SweepError> {
    let configs = sample_configs(space, n_trials, sweep_seed)?;
    std::fs::create_dir_all(out_dir).map_err(|source| SweepError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let ledger_path = out_dir.join(LEDGER_FILE);
    let mut done: BTreeMap<usize, TrialRecord> = BTreeMap::new();
    for record in read_ledger(&ledger_path)? {
        let id = record.trial_id;
        match configs.get(id.wrapping_sub(1)) {
            Some(expected) if *expected == record.config => {}
            Some(_) => {
                return Err(SweepError::Ledger(format!(
                    "trial {id} in the ledger has a different config; the space or sweep seed changed"
                )))
            }
            None => continue,
        }
        if done.insert(id, record).is_some() {
            return Err(SweepError::Ledger(format!("trial {id} recorded twice")));
        }
    }

    for (i, config) in configs.iter().enumerate() {
        let trial_id = i + 1;
        if done.contains_key(&trial_id) {
            log::info!("trial {trial_id} already in ledger, skipping");
            continue;
        }
        let checkpoint = out_dir.join(format!("trial-{trial_id:03}.safetensors"));
        let started = Instant::now();
        let result = runner.run(trial_id, config, &checkpoint);
        let wall_clock_ms = started.elapsed().as_secs_f64() * 1e3;
        let seeds = TrialSeeds {
            sweep_seed,
            global_seed: runner.global_seed(),
        };
        let record = match result {
            Ok(objective) if objective.is_finite() => TrialRecord {
                trial_id,
                config: *config,
                seeds,
                objective: Some(objective),
                status: TrialStatus::Completed,
                error: None,
                wall_clock_ms,
                checkpoint: checkpoint.is_file().then_some(checkpoint),
            },
            other => TrialRecord {
                trial_id,
                config: *config,
                seeds,
                objective: None,
                status: TrialStatus::Failed,
                error: Some(match other {
                    Ok(v) => format!("non-finite objective {v}"),
                    Err(e) => e,
                }),
                wall_clock_ms,
                checkpoint: None,
            },
        };
        append_record(&ledger_path, &record)?;
        done.insert(trial_id, record);
    }

    let ledger: Vec<TrialRecord> = done.into_values().collect();
    let best = best_trial(&ledger).cloned();
    let best_path = out_dir.join(BEST_FILE);
    let body = serde_json::to_string_pretty(&best).expect("record serializes");
    let mut tmp = tempfile::NamedTempFile::new_in(out_dir).map_err(|source| SweepError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    tmp.write_all(body.as_bytes()).map_err(|source| SweepError::Io {
        path: best_path.clone(),
        source,
    })?;
    tmp.persist(&best_path).map_err(|e| SweepError::Io {
        path: best_path.clone(),
        source: e.error,
    })?;
    Ok(SweepOutcome { best, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Stub {
        objectives: Vec<Result<f64, String>>,
        calls: Vec<usize>,
        stop_after: Option<usize>,
    }

    impl TrialRunner for Stub {
        fn global_seed(&self) -> u64 {
            7
        }

        fn run(&mut self, trial_id: usize, _: &AugmentationConfig, _: &Path) -> Result<f64, String> {
            if self.stop_after.is_some_and(|n| self.calls.len() >= n) {
                panic!("interrupted");
            }
            self.calls.push(trial_id);
            self.objectives[trial_id - 1].clone()
        }
    }

    fn stub(objectives: Vec<Result<f64, String>>) -> Stub {
        Stub {
            objectives,
            calls: vec![],
            stop_after: None,
        }
    }

    fn ranged() -> SearchSpace {
        SearchSpace::parse("squeeze.max_ratio = range: 0, 0.2\nrotate.max_degrees = choice: 5, 10, 15\n").unwrap()
    }

    #[test]
    fn fixed_space_gives_identical_configs() {
        let cfgs = sample_configs(&SearchSpace::default(), 3, 1).unwrap();
        assert!(cfgs.iter().all(|c| *c == AugmentationConfig::default()));
    }

    #[test]
    fn sampling_is_seeded_and_bounded() {
        let a = sample_configs(&ranged(), 50, 11).unwrap();
        assert_eq!(a, sample_configs(&ranged(), 50, 11).unwrap());
        assert_ne!(a, sample_configs(&ranged(), 50, 12).unwrap());
        assert!(a.iter().all(|c| (0.0..=0.2).contains(&c.squeeze.max_ratio)));
        assert!(a.iter().all(|c| [5.0, 10.0, 15.0].contains(&c.rotate.max_degrees)));
    }

    #[test]
    fn bad_spaces_rejected() {
        for text in [
            "squeeze.max_ratio = range: 0.3, 0.1",
            "rotate.probability = range: 0, 2",
            "rotate.probability = choice:",
            "unknown.key = fixed: 1",
            "rotate.probability = 0.5",
            "squeeze.max_ratio = fixed: 0.6",
        ] {
            assert!(SearchSpace::parse(text).is_err(), "{text}");
        }
        assert!(sample_configs(&SearchSpace::default(), 0, 1).is_err());
    }

    #[test]
    fn best_is_argmax_with_early_ties() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&ranged(), 2, 1, dir.path(), &mut stub(vec![Ok(0.4), Ok(0.7)])).unwrap();
        assert_eq!(out.best.unwrap().trial_id, 2);
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&ranged(), 3, 1, dir.path(), &mut stub(vec![Ok(0.5), Ok(0.7), Ok(0.7)])).unwrap();
        assert_eq!(out.best.unwrap().trial_id, 2);
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&ranged(), 1, 1, dir.path(), &mut stub(vec![Ok(0.1)])).unwrap();
        assert_eq!(out.best.unwrap().trial_id, 1);
        assert!(dir.path().join(BEST_FILE).is_file());
    }

    #[test]
    fn failures_are_recorded_and_sweep_continues() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&ranged(), 3, 1, dir.path(), &mut stub(vec![Ok(0.2), Err("boom".into()), Ok(0.1)])).unwrap();
        assert_eq!(out.ledger.len(), 3);
        assert_eq!(out.ledger[1].status, TrialStatus::Failed);
        assert_eq!(out.ledger[1].objective, None);
        assert_eq!(out.best.unwrap().trial_id, 1);
    }

    #[test]
    fn resume_skips_completed_trials() {
        let objectives: Vec<Result<f64, String>> = vec![Ok(0.1), Ok(0.9), Ok(0.3), Ok(0.2), Ok(0.5)];
        let dir = tempfile::tempdir().unwrap();
        let mut interrupted = Stub {
            stop_after: Some(3),
            ..stub(objectives.clone())
        };
        let crashed = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            run_sweep(&ranged(), 5, 4, dir.path(), &mut interrupted)
        }));
        assert!(crashed.is_err());
        assert_eq!(read_ledger(&dir.path().join(LEDGER_FILE)).unwrap().len(), 3);

        let mut resumed = stub(objectives.clone());
        let out = run_sweep(&ranged(), 5, 4, dir.path(), &mut resumed).unwrap();
        assert_eq!(resumed.calls, vec![4, 5]);
        assert_eq!(out.ledger.len(), 5);

        let fresh_dir = tempfile::tempdir().unwrap();
        let fresh = run_sweep(&ranged(), 5, 4, fresh_dir.path(), &mut stub(objectives)).unwrap();
        assert_eq!(fresh.best.as_ref().map(|b| b.trial_id), out.best.as_ref().map(|b| b.trial_id));
        assert_eq!(out.best.unwrap().trial_id, 2);
    }

    #[test]
    fn changed_space_detected_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        run_sweep(&ranged(), 2, 1, dir.path(), &mut stub(vec![Ok(0.1), Ok(0.2)])).unwrap();
        let err = run_sweep(&ranged(), 2, 2, dir.path(), &mut stub(vec![Ok(0.1), Ok(0.2)])).unwrap_err();
        assert!(matches!(err, SweepError::Ledger(_)));
    }
}
