//! Pose-estimator adapters.
//!
//! An adapter turns a video file into raw per-frame estimator output. The
//! toolkit does not ship a pose estimator; [`CommandEstimator`] drives an
//! external program that decodes the video, runs the estimator and prints a
//! [`RawDump`] as JSON on stdout.
//!
//! Adapters are not assumed to be reentrant: callers hold one instance per
//! worker or guard a shared one with a lock.

use std::path::{Path, PathBuf};
use std::process::Command;

use super::frame::PoseSequence;
use super::map::{convert_sequence, LandmarkMap, RawDump};
use super::SkeletalError;

/// Environment variable holding the estimator command line.
pub const ESTIMATOR_ENV: &str = "SPOTERKIT_ESTIMATOR";

pub trait EstimatorAdapter: Send {
    /// Identifies the estimator build; part of the landmark cache key.
    fn version(&self) -> &str;

    fn landmark_map(&self) -> &LandmarkMap;

    /// Decodes `video` and runs the estimator on every frame.
    fn estimate(&mut self, video: &Path) -> Result<RawDump, SkeletalError>;

    /// Whether one instance may serve concurrent callers.
    fn is_reentrant(&self) -> bool {
        false
    }

    /// Cache key component: map digest combined with the estimator version.
    fn cache_key(&self) -> String {
        cache_key(self.landmark_map(), self.version())
    }
}

/// Landmark cache key: the map digest, suffixed with the estimator version
/// when it differs from the version the map declares.
pub fn cache_key(map: &LandmarkMap, estimator_version: &str) -> String {
    let mut key = map.digest();
    if estimator_version != map.estimator_version() {
        key.push('-');
        key.extend(estimator_version.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '.'));
    }
    key
}

/// Runs `program args... <video>` and parses its stdout as a [`RawDump`].
#[derive(Debug, Clone)]
pub struct CommandEstimator {
    program: PathBuf,
    args: Vec<String>,
    version: String,
    map: LandmarkMap,
}

impl CommandEstimator {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>, map: LandmarkMap) -> Self {
        let version = map.estimator_version().to_string();
        Self {
            program: program.into(),
            args,
            version,
            map,
        }
    }

    pub fn with_version(mut self, version: impl Into<String>) -> Self {
        self.version = version.into();
        self
    }

    /// Builds from a whitespace-separated command line.
    pub fn from_command_line(line: &str, map: LandmarkMap) -> Result<Self, SkeletalError> {
        let mut parts = line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| SkeletalError::EstimatorUnavailable("empty estimator command".into()))?;
        Ok(Self::new(program, parts.map(String::from).collect(), map))
    }

    /// Reads the command line from `SPOTERKIT_ESTIMATOR`.
    pub fn from_env(map: LandmarkMap) -> Result<Self, SkeletalError> {
        let line = std::env::var(ESTIMATOR_ENV).map_err(|_| {
            SkeletalError::EstimatorUnavailable(format!(
                "no pose estimator configured; set {ESTIMATOR_ENV} or convert pre-extracted landmark dumps instead"
            ))
        })?;
        Self::from_command_line(&line, map)
    }
}

impl EstimatorAdapter for CommandEstimator {
    fn version(&self) -> &str {
        &self.version
    }

    fn landmark_map(&self) -> &LandmarkMap {
        &self.map
    }

    fn estimate(&mut self, video: &Path) -> Result<RawDump, SkeletalError> {
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(video)
            .output()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                    SkeletalError::EstimatorUnavailable(format!("{}: {e}", self.program.display()))
                }
                _ => SkeletalError::Io(e),
            })?;
        if !output.status.success() {
            return Err(SkeletalError::VideoDecode(format!(
                "estimator exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| SkeletalError::Format {
            line: Some(e.line()),
            message: format!("estimator output: {e}"),
        })
    }
}

/// Decodes a video with `estimator` and converts it to the canonical layout.
///
/// The clip's `source_id` is the file stem.
pub fn extract_landmarks(video: &Path, estimator: &mut dyn EstimatorAdapter) -> Result<PoseSequence, SkeletalError> {
    let meta = std::fs::metadata(video)
        .map_err(|e| SkeletalError::VideoDecode(format!("{}: {e}", video.display())))?;
    if !meta.is_file() {
        return Err(SkeletalError::VideoDecode(format!("{} is not a file", video.display())));
    }
    let dump = estimator.estimate(video)?;
    if dump.frames.is_empty() {
        return Err(SkeletalError::VideoDecode("no frames decoded".into()));
    }
    let mut seq = convert_sequence(&dump.frames, dump.fps, estimator.landmark_map())?;
    seq.source_id = video
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(seq)
}
