//! C ABI over the classifier.
//!
//! Every fallible call returns a [`SpoterkitStatus`]; on failure a
//! human-readable message is available from [`spoterkit_last_error`] on the
//! same thread until the next failing call. Handles are opaque and must be
//! released with [`spoterkit_classifier_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spoterkit::model::{predict_topk, Checkpoint, ModelError};
use spoterkit::skeletal::{parse_sequence, read_sequence, PoseSequence, SkeletalError, SkeletalFrame, FRAME_DIM, SLOT_COUNT};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpoterkitStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Checkpoint = 4,
    /// Malformed landmark document or frame data.
    Landmarks = 5,
    /// `k` is zero or larger than the number of classes.
    InvalidK = 6,
    /// Every frame has zero detected landmarks.
    NoDetections = 7,
    Internal = 8,
}

/// A loaded checkpoint ready for inference.
pub struct SpoterkitClassifier {
    checkpoint: Checkpoint,
    model_id: CString,
    glosses: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(SpoterkitStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::InvalidK { .. } => SpoterkitStatus::InvalidK,
            ModelError::Checkpoint(_) | ModelError::VocabularyMismatch(_) | ModelError::Config(_) => {
                SpoterkitStatus::Checkpoint
            }
            ModelError::Io { .. } => SpoterkitStatus::Io,
            ModelError::DimensionMismatch { .. } | ModelError::EmptySequence => SpoterkitStatus::Landmarks,
            _ => SpoterkitStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SkeletalError> for Failure {
    fn from(e: SkeletalError) -> Self {
        let status = match &e {
            SkeletalError::Io { .. } => SpoterkitStatus::Io,
            _ => SpoterkitStatus::Landmarks,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpoterkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpoterkitStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpoterkitStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SpoterkitStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SpoterkitStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn handle<'a>(h: *const SpoterkitClassifier) -> Result<&'a SpoterkitClassifier, Failure> {
    h.as_ref().ok_or_else(|| null("classifier"))
}

impl SpoterkitClassifier {
    fn new(checkpoint: Checkpoint) -> Self {
        let cstring = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
        Self {
            model_id: cstring(&checkpoint.model_id()),
            glosses: checkpoint.vocabulary.glosses().iter().map(|g| cstring(g)).collect(),
            checkpoint,
        }
    }

    unsafe fn predict(
        &self,
        seq: &PoseSequence,
        k: usize,
        out_classes: *mut usize,
        out_probabilities: *mut f64,
    ) -> Result<(), Failure> {
        if out_classes.is_null() {
            return Err(null("out_classes"));
        }
        if out_probabilities.is_null() {
            return Err(null("out_probabilities"));
        }
        if !seq.frames().iter().any(SkeletalFrame::any_present) {
            return Err(Failure(
                SpoterkitStatus::NoDetections,
                "every frame has zero detected landmarks".into(),
            ));
        }
        let prediction = predict_topk(&self.checkpoint.prepare(seq), &self.checkpoint, k)?;
        let classes = std::slice::from_raw_parts_mut(out_classes, k);
        let probabilities = std::slice::from_raw_parts_mut(out_probabilities, k);
        for (i, r) in prediction.ranked.iter().enumerate() {
            classes[i] = r.class_index;
            probabilities[i] = r.probability;
        }
        Ok(())
    }
}

/// Loads a checkpoint file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_classifier_open(
    path: *const c_char,
    out: *mut *mut SpoterkitClassifier,
) -> SpoterkitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let checkpoint = Checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SpoterkitClassifier::new(checkpoint)));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `classifier` must come from [`spoterkit_classifier_open`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_classifier_free(classifier: *mut SpoterkitClassifier) {
    if !classifier.is_null() {
        drop(Box::from_raw(classifier));
    }
}

/// Number of glosses the classifier distinguishes, or 0 for a null handle.
///
/// # Safety
/// `classifier` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_classifier_num_classes(classifier: *const SpoterkitClassifier) -> usize {
    classifier.as_ref().map_or(0, |c| c.glosses.len())
}

/// Gloss for a class index, or null when out of range. The string lives as
/// long as the handle.
///
/// # Safety
/// `classifier` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_classifier_gloss(
    classifier: *const SpoterkitClassifier,
    class_index: usize,
) -> *const c_char {
    classifier
        .as_ref()
        .and_then(|c| c.glosses.get(class_index))
        .map_or(ptr::null(), |g| g.as_ptr())
}

/// Content hash identifying the loaded weights. Lives as long as the handle.
///
/// # Safety
/// `classifier` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_classifier_model_id(classifier: *const SpoterkitClassifier) -> *const c_char {
    classifier.as_ref().map_or(ptr::null(), |c| c.model_id.as_ptr())
}

/// Top-`k` prediction for a landmark document (structured JSON or tabular
/// text). Writes `k` class indices and probabilities, most likely first.
///
/// # Safety
/// `document` must be NUL-terminated; both output arrays must hold `k`
/// elements.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_predict_document(
    classifier: *const SpoterkitClassifier,
    document: *const c_char,
    k: usize,
    out_classes: *mut usize,
    out_probabilities: *mut f64,
) -> SpoterkitStatus {
    guard(|| {
        let c = handle(classifier)?;
        let seq = parse_sequence(str_arg(document, "document")?)?;
        c.predict(&seq, k, out_classes, out_probabilities)
    })
}

/// Like [`spoterkit_predict_document`], reading the document from a file.
///
/// # Safety
/// See [`spoterkit_predict_document`]; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_predict_file(
    classifier: *const SpoterkitClassifier,
    path: *const c_char,
    k: usize,
    out_classes: *mut usize,
    out_probabilities: *mut f64,
) -> SpoterkitStatus {
    guard(|| {
        let c = handle(classifier)?;
        let seq = read_sequence(Path::new(str_arg(path, "path")?))?;
        c.predict(&seq, k, out_classes, out_probabilities)
    })
}

/// Top-`k` prediction from raw canonical frames: `coords` holds
/// `frames * 108` values (x, y per slot) and `present` holds `frames * 54`
/// flags (non-zero = detected). Coordinates of absent slots are ignored.
///
/// # Safety
/// Array lengths must match `frames`; both output arrays must hold `k`
/// elements.
#[no_mangle]
pub unsafe extern "C" fn spoterkit_predict_frames(
    classifier: *const SpoterkitClassifier,
    coords: *const f64,
    present: *const u8,
    frames: usize,
    fps: f64,
    k: usize,
    out_classes: *mut usize,
    out_probabilities: *mut f64,
) -> SpoterkitStatus {
    guard(|| {
        let c = handle(classifier)?;
        if coords.is_null() {
            return Err(null("coords"));
        }
        if present.is_null() {
            return Err(null("present"));
        }
        let coords = std::slice::from_raw_parts(coords, frames * FRAME_DIM);
        let present = std::slice::from_raw_parts(present, frames * SLOT_COUNT);
        let frames = coords
            .chunks_exact(FRAME_DIM)
            .zip(present.chunks_exact(SLOT_COUNT))
            .map(|(xy, flags)| {
                let points: Vec<_> = flags
                    .iter()
                    .enumerate()
                    .map(|(s, &f)| (f != 0).then(|| [xy[2 * s], xy[2 * s + 1]]))
                    .collect();
                SkeletalFrame::from_points(&points)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seq = PoseSequence::new(frames, fps, None, "ffi")?;
        c.predict(&seq, k, out_classes, out_probabilities)
    })
}

/// Message for the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spoterkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn spoterkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
