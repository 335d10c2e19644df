//! Canonical 54-landmark skeletal format and conversion from raw pose
//! estimator output.

mod estimator;
mod frame;
mod io;
mod map;
pub mod schema;

use thiserror::Error;

pub use estimator::{cache_key, extract_landmarks, CommandEstimator, EstimatorAdapter, ESTIMATOR_ENV};
pub use frame::{Point, PoseSequence, SkeletalFrame};
pub use io::{
    from_structured_str, from_tabular_str, parse_sequence, read_sequence, to_structured_string, to_tabular_string,
    write_sequence, write_sequence_as, LandmarkFormat, SCHEMA_VERSION,
};
pub use map::{
    convert_frame, convert_sequence, LandmarkMap, RawDump, RawEstimatorFrame, RawLandmark, SynthesisKind,
    SynthesisRule,
};
pub use schema::{CanonicalSchema, Group, Side, FRAME_DIM, SLOT_COUNT};

#[derive(Debug, Error)]
pub enum SkeletalError {
    #[error("{part} has {found} landmarks but the map expects {expected}")]
    SchemaMismatch {
        part: String,
        expected: usize,
        found: usize,
    },
    #[error("no frames to convert")]
    EmptyInput,
    #[error("fps must be a positive number, got {0}")]
    InvalidFps(f64),
    #[error("expected {expected} slots, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("slot {slot} is absent but its coordinates are not (0, 0)")]
    Sentinel { slot: usize },
    #[error("video decode failed: {0}")]
    VideoDecode(String),
    #[error("pose estimator unavailable: {0}")]
    EstimatorUnavailable(String),
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Format { line: Option<usize>, message: String },
    #[error("invalid landmark map: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
