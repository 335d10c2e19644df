//! Declarative mapping from an estimator's native landmark indices to the
//! canonical schema, and the frame conversion driven by it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::frame::{PoseSequence, SkeletalFrame};
use super::schema::{CanonicalSchema, Group, Side, HAND_JOINT_NAMES, HAND_SLOTS, SLOT_COUNT};
use super::SkeletalError;

const MEDIAPIPE_HOLISTIC: &str = include_str!("../../data/mediapipe_holistic.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Marker {
    Synthesized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum IdentityMarker {
    Identity,
}

/// Where a canonical body slot comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum BodySource {
    Index(usize),
    Synthesized(Marker),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum HandMap {
    Identity(IdentityMarker),
    Explicit(BTreeMap<String, usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct HandMaps {
    left: HandMap,
    right: HandMap,
}

/// Rule used to fill a synthesized slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisKind {
    /// Midpoint of exactly two input slots; absent unless both are present.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRule {
    pub target: String,
    pub rule: SynthesisKind,
    pub inputs: Vec<String>,
}

/// On-disk shape of a landmark map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LandmarkMapFile {
    estimator_name: String,
    #[serde(default)]
    estimator_version: String,
    body_arity: usize,
    hand_arity: usize,
    body_map: BTreeMap<String, BodySource>,
    hand_maps: HandMaps,
    #[serde(default)]
    synthesis_rules: Vec<SynthesisRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Body(usize),
    Hand(Side, usize),
    Synth,
}

#[derive(Debug, Clone, PartialEq)]
struct ResolvedRule {
    target: usize,
    kind: SynthesisKind,
    inputs: Vec<usize>,
}

/// A validated estimator → canonical mapping.
///
/// Every canonical slot is covered by exactly one source index or one
/// synthesis rule, and rules only read slots filled before them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandmarkMapFile", into = "LandmarkMapFile")]
pub struct LandmarkMap {
    file: LandmarkMapFile,
    sources: Vec<Source>,
    rules: Vec<ResolvedRule>,
}

impl From<LandmarkMap> for LandmarkMapFile {
    fn from(map: LandmarkMap) -> Self {
        map.file
    }
}

impl TryFrom<LandmarkMapFile> for LandmarkMap {
    type Error = SkeletalError;

    fn try_from(file: LandmarkMapFile) -> Result<Self, Self::Error> {
        let schema = CanonicalSchema;
        let invalid = |msg: String| SkeletalError::InvalidMap(msg);
        let mut sources: Vec<Option<Source>> = vec![None; SLOT_COUNT];
        let mut pending_synth = [false; SLOT_COUNT];

        for (name, src) in &file.body_map {
            let slot = schema
                .index_of(name)
                .filter(|&s| schema.group(s) == Group::Body)
                .ok_or_else(|| invalid(format!("body_map: unknown body slot `{name}`")))?;
            match *src {
                BodySource::Index(i) if i >= file.body_arity => {
                    return Err(invalid(format!(
                        "body_map: `{name}` -> {i} exceeds body arity {}",
                        file.body_arity
                    )))
                }
                BodySource::Index(i) => sources[slot] = Some(Source::Body(i)),
                BodySource::Synthesized(_) => pending_synth[slot] = true,
            }
        }

        for (side, hand) in [(Side::Left, &file.hand_maps.left), (Side::Right, &file.hand_maps.right)] {
            match hand {
                HandMap::Identity(_) => {
                    if file.hand_arity < HAND_SLOTS {
                        return Err(invalid(format!(
                            "identity hand map needs hand arity >= {HAND_SLOTS}, got {}",
                            file.hand_arity
                        )));
                    }
                    for j in 0..HAND_SLOTS {
                        sources[schema.hand_slot(side, j)] = Some(Source::Hand(side, j));
                    }
                }
                HandMap::Explicit(entries) => {
                    for (joint, &i) in entries {
                        let j = HAND_JOINT_NAMES
                            .iter()
                            .position(|n| n == joint)
                            .ok_or_else(|| invalid(format!("hand_maps.{side}: unknown joint `{joint}`")))?;
                        if i >= file.hand_arity {
                            return Err(invalid(format!(
                                "hand_maps.{side}: `{joint}` -> {i} exceeds hand arity {}",
                                file.hand_arity
                            )));
                        }
                        sources[schema.hand_slot(side, j)] = Some(Source::Hand(side, i));
                    }
                }
            }
        }

        let mut filled: Vec<bool> = sources.iter().map(Option::is_some).collect();
        let mut rules = Vec::with_capacity(file.synthesis_rules.len());
        for rule in &file.synthesis_rules {
            let target = schema
                .index_of(&rule.target)
                .ok_or_else(|| invalid(format!("synthesis rule: unknown target `{}`", rule.target)))?;
            if filled[target] {
                return Err(invalid(format!("slot `{}` is covered more than once", rule.target)));
            }
            let SynthesisKind::Midpoint = rule.rule;
            if rule.inputs.len() != 2 {
                return Err(invalid(format!(
                    "midpoint rule for `{}` needs exactly 2 inputs, got {}",
                    rule.target,
                    rule.inputs.len()
                )));
            }
            let mut inputs = Vec::with_capacity(rule.inputs.len());
            for input in &rule.inputs {
                let slot = schema
                    .index_of(input)
                    .ok_or_else(|| invalid(format!("synthesis rule: unknown input `{input}`")))?;
                if !filled[slot] {
                    return Err(invalid(format!(
                        "rule for `{}` reads `{input}` before it is filled",
                        rule.target
                    )));
                }
                inputs.push(slot);
            }
            filled[target] = true;
            sources[target] = Some(Source::Synth);
            pending_synth[target] = false;
            rules.push(ResolvedRule {
                target,
                kind: rule.rule,
                inputs,
            });
        }

        if let Some(slot) = pending_synth.iter().position(|&p| p) {
            return Err(invalid(format!(
                "`{}` is marked synthesized but no rule fills it",
                schema.name(slot)
            )));
        }
        let sources = sources
            .into_iter()
            .enumerate()
            .map(|(slot, s)| s.ok_or_else(|| invalid(format!("slot `{}` is not covered", schema.name(slot)))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(c) = file.min_confidence {
            if !c.is_finite() {
                return Err(invalid("min_confidence must be finite".into()));
            }
        }

        Ok(Self { file, sources, rules })
    }
}

impl LandmarkMap {
    /// The bundled MediaPipe Holistic map (33 body points, two 21-point hands).
    pub fn mediapipe_holistic() -> Self {
        Self::from_json(MEDIAPIPE_HOLISTIC).expect("bundled landmark map is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SkeletalError> {
        serde_json::from_str(text).map_err(|e| SkeletalError::InvalidMap(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SkeletalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landmark map serializes")
    }

    pub fn estimator_name(&self) -> &str {
        &self.file.estimator_name
    }

    pub fn estimator_version(&self) -> &str {
        &self.file.estimator_version
    }

    pub fn body_arity(&self) -> usize {
        self.file.body_arity
    }

    pub fn hand_arity(&self) -> usize {
        self.file.hand_arity
    }

    pub fn min_confidence(&self) -> Option<f64> {
        self.file.min_confidence
    }

    pub fn synthesis_rules(&self) -> &[SynthesisRule] {
        &self.file.synthesis_rules
    }

    /// Short hex digest identifying this map and the estimator version.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.file).expect("landmark map serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..8])
    }
}

/// One landmark as reported by an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLandmarkRepr")]
pub struct RawLandmark {
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl RawLandmark {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, confidence: None }
    }
}

/// Accepted wire shapes: `[x, y]`, `[x, y, z]`, `[x, y, z, visibility]`, or
/// an object with `x`, `y` and optional `z`, `visibility`/`confidence`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawLandmarkRepr {
    Array(Vec<f64>),
    Object {
        x: f64,
        y: f64,
        #[serde(default)]
        #[allow(dead_code)]
        z: Option<f64>,
        #[serde(default, alias = "visibility")]
        confidence: Option<f64>,
    },
}

impl TryFrom<RawLandmarkRepr> for RawLandmark {
    type Error = String;

    fn try_from(repr: RawLandmarkRepr) -> Result<Self, Self::Error> {
        match repr {
            RawLandmarkRepr::Array(v) => match v.len() {
                2 | 3 => Ok(Self { x: v[0], y: v[1], confidence: None }),
                4 => Ok(Self { x: v[0], y: v[1], confidence: Some(v[3]) }),
                n => Err(format!("landmark array must have 2 to 4 numbers, got {n}")),
            },
            RawLandmarkRepr::Object { x, y, confidence, .. } => Ok(Self { x, y, confidence }),
        }
    }
}

/// Raw per-frame estimator output. `None` lists mean "not detected";
/// `None` entries inside a list mean that single landmark was not reported.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawEstimatorFrame {
    #[serde(default)]
    pub body: Option<Vec<Option<RawLandmark>>>,
    #[serde(default)]
    pub left_hand: Option<Vec<Option<RawLandmark>>>,
    #[serde(default)]
    pub right_hand: Option<Vec<Option<RawLandmark>>>,
}

/// A clip's worth of raw estimator output, as exchanged with estimator
/// backends and accepted by `convert`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDump {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    pub fps: f64,
    pub frames: Vec<RawEstimatorFrame>,
}

impl RawDump {
    pub fn load(path: &Path) -> Result<Self, SkeletalError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SkeletalError::Format {
            line: Some(e.line()),
            message: e.to_string(),
        })
    }
}

fn accepted(lm: &RawLandmark, min_confidence: Option<f64>) -> bool {
    if !(lm.x.is_finite() && lm.y.is_finite()) {
        return false;
    }
    match (min_confidence, lm.confidence) {
        (Some(min), Some(c)) => c >= min,
        _ => true,
    }
}

fn check_arity(part: &str, list: &Option<Vec<Option<RawLandmark>>>, expected: usize) -> Result<(), SkeletalError> {
    match list {
        Some(l) if l.len() != expected => Err(SkeletalError::SchemaMismatch {
            part: part.to_string(),
            expected,
            found: l.len(),
        }),
        _ => Ok(()),
    }
}

/// Converts one raw estimator frame into the canonical layout.
pub fn convert_frame(raw: &RawEstimatorFrame, map: &LandmarkMap) -> Result<SkeletalFrame, SkeletalError> {
    check_arity("body", &raw.body, map.body_arity())?;
    check_arity("left_hand", &raw.left_hand, map.hand_arity())?;
    check_arity("right_hand", &raw.right_hand, map.hand_arity())?;

    let min_conf = map.min_confidence();
    let pick = |list: &Option<Vec<Option<RawLandmark>>>, i: usize| {
        list.as_ref()
            .and_then(|l| l[i])
            .filter(|lm| accepted(lm, min_conf))
            .map(|lm| [lm.x, lm.y])
    };

    let mut frame = SkeletalFrame::empty();
    for (slot, src) in map.sources.iter().enumerate() {
        let point = match *src {
            Source::Body(i) => pick(&raw.body, i),
            Source::Hand(Side::Left, i) => pick(&raw.left_hand, i),
            Source::Hand(Side::Right, i) => pick(&raw.right_hand, i),
            Source::Synth => None,
        };
        if let Some(p) = point {
            frame.set(slot, p);
        }
    }
    for rule in &map.rules {
        match rule.kind {
            SynthesisKind::Midpoint => {
                if let (Some(a), Some(b)) = (frame.get(rule.inputs[0]), frame.get(rule.inputs[1])) {
                    frame.set(rule.target, [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
                }
            }
        }
    }
    Ok(frame)
}

/// Frame-wise conversion preserving order and count.
pub fn convert_sequence(
    raw_frames: &[RawEstimatorFrame],
    fps: f64,
    map: &LandmarkMap,
) -> Result<PoseSequence, SkeletalError> {
    if raw_frames.is_empty() {
        return Err(SkeletalError::EmptyInput);
    }
    let frames = raw_frames
        .iter()
        .map(|raw| convert_frame(raw, map))
        .collect::<Result<Vec<_>, _>>()?;
    PoseSequence::new(frames, fps, None, String::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeletal::schema::*;

    fn lm(x: f64, y: f64) -> Option<RawLandmark> {
        Some(RawLandmark::new(x, y))
    }

    fn full_raw() -> RawEstimatorFrame {
        let body = (0..33).map(|i| lm(0.01 * i as f64, 0.5)).collect::<Vec<_>>();
        let hand = |off: f64| (0..21).map(|i| lm(off + 0.001 * i as f64, 0.7)).collect::<Vec<_>>();
        RawEstimatorFrame {
            body: Some(body),
            left_hand: Some(hand(0.2)),
            right_hand: Some(hand(0.6)),
        }
    }

    #[test]
    fn bundled_map_is_valid() {
        let map = LandmarkMap::mediapipe_holistic();
        assert_eq!(map.body_arity(), 33);
        assert_eq!(map.hand_arity(), 21);
        assert_eq!(map.digest().len(), 16);
    }

    #[test]
    fn neck_is_shoulder_midpoint() {
        let map = LandmarkMap::mediapipe_holistic();
        let mut raw = full_raw();
        let body = raw.body.as_mut().unwrap();
        body[11] = lm(0.4, 0.5);
        body[12] = lm(0.6, 0.5);
        let frame = convert_frame(&raw, &map).unwrap();
        assert_eq!(frame.get(NECK), Some([0.5, 0.5]));
    }

    #[test]
    fn full_frame_fills_all_slots() {
        let frame = convert_frame(&full_raw(), &LandmarkMap::mediapipe_holistic()).unwrap();
        assert_eq!(frame.present_count(), 54);
        assert_eq!(frame.get(LEFT_EYE), Some([0.02, 0.5]));
        assert_eq!(frame.get(RIGHT_WRIST), Some([0.16, 0.5]));
        assert_eq!(frame.get(RIGHT_HAND_START + 20), Some([0.6 + 0.02, 0.7]));
    }

    #[test]
    fn missing_hand_is_sentinel() {
        let mut raw = full_raw();
        raw.right_hand = None;
        let frame = convert_frame(&raw, &LandmarkMap::mediapipe_holistic()).unwrap();
        for slot in Group::RightHand.slots() {
            assert!(!frame.is_present(slot));
            assert_eq!(frame.coords()[slot], [0.0, 0.0]);
        }
        assert_eq!(frame.present_count(), 33);
    }

    #[test]
    fn one_shoulder_means_no_neck() {
        let mut raw = full_raw();
        raw.body.as_mut().unwrap()[12] = None;
        let frame = convert_frame(&raw, &LandmarkMap::mediapipe_holistic()).unwrap();
        assert!(frame.is_present(LEFT_SHOULDER));
        assert!(!frame.is_present(NECK));
        assert_eq!(frame.coords()[NECK], [0.0, 0.0]);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let mut raw = full_raw();
        raw.body.as_mut().unwrap().pop();
        let err = convert_frame(&raw, &LandmarkMap::mediapipe_holistic()).unwrap_err();
        assert!(matches!(err, SkeletalError::SchemaMismatch { expected: 33, found: 32, .. }));
    }

    #[test]
    fn confidence_filter_is_opt_in() {
        let mut raw = full_raw();
        raw.body.as_mut().unwrap()[0] = Some(RawLandmark { x: 0.1, y: 0.1, confidence: Some(0.2) });
        let map = LandmarkMap::mediapipe_holistic();
        assert!(convert_frame(&raw, &map).unwrap().is_present(NOSE));

        let mut file: LandmarkMapFile = map.into();
        file.min_confidence = Some(0.5);
        let strict = LandmarkMap::try_from(file).unwrap();
        assert!(!convert_frame(&raw, &strict).unwrap().is_present(NOSE));
    }

    #[test]
    fn out_of_range_kept() {
        let mut raw = full_raw();
        raw.body.as_mut().unwrap()[0] = lm(-0.05, 1.1);
        let frame = convert_frame(&raw, &LandmarkMap::mediapipe_holistic()).unwrap();
        assert_eq!(frame.get(NOSE), Some([-0.05, 1.1]));
    }

    #[test]
    fn invalid_maps_rejected() {
        let base: LandmarkMapFile = LandmarkMap::mediapipe_holistic().into();

        let mut uncovered = base.clone();
        uncovered.body_map.remove("nose");
        assert!(LandmarkMap::try_from(uncovered).is_err());

        let mut double = base.clone();
        double.body_map.insert("neck".into(), BodySource::Index(1));
        assert!(LandmarkMap::try_from(double).is_err());

        let mut forward_ref = base.clone();
        forward_ref.synthesis_rules.insert(
            0,
            SynthesisRule {
                target: "nose".into(),
                rule: SynthesisKind::Midpoint,
                inputs: vec!["neck".into(), "leftEye".into()],
            },
        );
        forward_ref.body_map.insert("nose".into(), BodySource::Synthesized(Marker::Synthesized));
        assert!(LandmarkMap::try_from(forward_ref).is_err());

        let mut oob = base;
        oob.body_map.insert("nose".into(), BodySource::Index(40));
        assert!(LandmarkMap::try_from(oob).is_err());
    }

    #[test]
    fn raw_landmark_shapes() {
        let v: Vec<Option<RawLandmark>> =
            serde_json::from_str(r#"[[0.1,0.2],[0.1,0.2,0.3],[0.1,0.2,0.3,0.9],{"x":1,"y":2,"visibility":0.5},null]"#)
                .unwrap();
        assert_eq!(v[0], Some(RawLandmark::new(0.1, 0.2)));
        assert_eq!(v[1], Some(RawLandmark::new(0.1, 0.2)));
        assert_eq!(v[2].unwrap().confidence, Some(0.9));
        assert_eq!(v[3].unwrap().confidence, Some(0.5));
        assert_eq!(v[4], None);
        assert!(serde_json::from_str::<RawLandmark>("[1.0]").is_err());
    }

    #[test]
    fn sequence_conversion_preserves_count() {
        let map = LandmarkMap::mediapipe_holistic();
        let raws: Vec<_> = (0..10)
            .map(|i| {
                let mut r = full_raw();
                if i % 2 == 1 {
                    r.left_hand = None;
                }
                r
            })
            .collect();
        let seq = convert_sequence(&raws, 25.0, &map).unwrap();
        assert_eq!(seq.len(), 10);
        for (i, f) in seq.frames().iter().enumerate() {
            assert_eq!(f.is_present(LEFT_HAND_START), i % 2 == 0);
        }
        assert_eq!(convert_sequence(&raws[..1], 25.0, &map).unwrap().len(), 1);
        assert!(matches!(convert_sequence(&[], 25.0, &map), Err(SkeletalError::EmptyInput)));
    }
}
