//! Signer-invariant normalization.
//!
//! Body landmarks are translated so the sequence-mean neck lands on
//! [`CANONICAL_ANCHOR`] and scaled so the reference body scale becomes 1.
//! The reference scale is the sequence-mean shoulder distance, falling back
//! to the mean nose–neck distance when both shoulders are visible in fewer
//! than half of the frames that show any body landmark, and to 1.0 (flagged
//! degenerate) when neither is available.
//!
//! Each hand is mapped into the unit square of its own sequence-level
//! bounding box: centered on the box center and divided by the box's longer
//! side, so the aspect ratio is kept.

use serde::Serialize;

use crate::skeletal::schema::{Group, LEFT_SHOULDER, NECK, NOSE, RIGHT_SHOULDER};
use crate::skeletal::{Point, PoseSequence, Side};

/// Where the body anchor lands after normalization.
pub const CANONICAL_ANCHOR: Point = [0.5, 0.5];

/// Source of the body reference scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyScaleSource {
    Shoulders,
    HeadToNeck,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn center(&self) -> Point {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn longer_side(&self) -> f64 {
        (self.max[0] - self.min[0]).max(self.max[1] - self.min[1])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DegenerateFlags {
    pub body: bool,
    pub left_hand: bool,
    pub right_hand: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.body || self.left_hand || self.right_hand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub body_anchor: Option<Point>,
    pub body_scale_used: f64,
    pub body_scale_source: BodyScaleSource,
    /// Bounding boxes used for the left and right hand, in that order.
    pub hand_boxes: [Option<BoundingBox>; 2],
    pub degenerate: DegenerateFlags,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn body_scale(seq: &PoseSequence) -> (f64, BodyScaleSource) {
    let frames = seq.frames();
    let body_frames = frames
        .iter()
        .filter(|f| Group::Body.slots().any(|s| f.is_present(s)))
        .count();
    let shoulder_dists: Vec<f64> = frames
        .iter()
        .filter_map(|f| Some(distance(f.get(LEFT_SHOULDER)?, f.get(RIGHT_SHOULDER)?)))
        .collect();
    if !shoulder_dists.is_empty() && 2 * shoulder_dists.len() >= body_frames {
        let s = mean_of(shoulder_dists.into_iter()).unwrap();
        if s > 0.0 && s.is_finite() {
            return (s, BodyScaleSource::Shoulders);
        }
    }
    let head = mean_of(frames.iter().filter_map(|f| Some(distance(f.get(NOSE)?, f.get(NECK)?))));
    match head {
        Some(s) if s > 0.0 && s.is_finite() => (s, BodyScaleSource::HeadToNeck),
        _ => (1.0, BodyScaleSource::Fallback),
    }
}

fn hand_box(seq: &PoseSequence, side: Side) -> Option<BoundingBox> {
    let mut bbox: Option<BoundingBox> = None;
    for f in seq.frames() {
        for slot in side.hand_group().slots() {
            if let Some(p) = f.get(slot) {
                let b = bbox.get_or_insert(BoundingBox { min: p, max: p });
                for (axis, v) in p.into_iter().enumerate() {
                    b.min[axis] = b.min[axis].min(v);
                    b.max[axis] = b.max[axis].max(v);
                }
            }
        }
    }
    bbox
}

/// Normalizes body and hands into the signer-invariant frame.
///
/// Never fails: degenerate parts pass through unchanged (or translated
/// only, when the body has an anchor but no usable scale) and are flagged.
pub fn normalize_sequence(seq: &PoseSequence) -> (PoseSequence, NormalizationReport) {
    let mut out = seq.clone();
    let mut degenerate = DegenerateFlags::default();

    let anchor = {
        let necks: Vec<Point> = seq.frames().iter().filter_map(|f| f.get(NECK)).collect();
        mean_of(necks.iter().map(|p| p[0])).zip(mean_of(necks.iter().map(|p| p[1]))).map(|(x, y)| [x, y])
    };
    let (scale, source) = body_scale(seq);
    match anchor {
        Some(anchor) => {
            degenerate.body = source == BodyScaleSource::Fallback;
            for f in out.frames_mut() {
                f.map_present(|slot, p| {
                    if slot < Group::LeftHand.slots().start {
                        [
                            (p[0] - anchor[0]) / scale + CANONICAL_ANCHOR[0],
                            (p[1] - anchor[1]) / scale + CANONICAL_ANCHOR[1],
                        ]
                    } else {
                        p
                    }
                });
            }
        }
        None => degenerate.body = true,
    }

    let mut hand_boxes = [None, None];
    for (i, side) in Side::BOTH.into_iter().enumerate() {
        let bbox = hand_box(seq, side);
        hand_boxes[i] = bbox;
        let usable = bbox.filter(|b| b.longer_side() > 0.0 && b.longer_side().is_finite());
        let flag = match side {
            Side::Left => &mut degenerate.left_hand,
            Side::Right => &mut degenerate.right_hand,
        };
        let Some(b) = usable else {
            *flag = true;
            continue;
        };
        let (c, len) = (b.center(), b.longer_side());
        let slots = side.hand_group().slots();
        for f in out.frames_mut() {
            f.map_present(|slot, p| {
                if slots.contains(&slot) {
                    [(p[0] - c[0]) / len + 0.5, (p[1] - c[1]) / len + 0.5]
                } else {
                    p
                }
            });
        }
    }

    let report = NormalizationReport {
        body_anchor: anchor,
        body_scale_used: scale,
        body_scale_source: source,
        hand_boxes,
        degenerate,
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeletal::schema::{LEFT_HAND_START, RIGHT_HAND_START};
    use crate::skeletal::SkeletalFrame;

    fn frame(points: &[(usize, Point)]) -> SkeletalFrame {
        let mut f = SkeletalFrame::empty();
        for &(s, p) in points {
            f.set(s, p);
        }
        f
    }

    #[test]
    fn body_maps_neck_to_anchor_and_shoulders_to_unit() {
        let f = frame(&[
            (LEFT_SHOULDER, [0.3, 0.4]),
            (RIGHT_SHOULDER, [0.5, 0.4]),
            (NECK, [0.4, 0.4]),
            (NOSE, [0.4, 0.3]),
        ]);
        let seq = PoseSequence::new(vec![f], 25.0, None, "x").unwrap();
        let (n, r) = normalize_sequence(&seq);
        assert_eq!(r.body_scale_source, BodyScaleSource::Shoulders);
        assert!((r.body_scale_used - 0.2).abs() < 1e-12);
        let g = &n.frames()[0];
        assert!((g.get(NECK).unwrap()[0] - 0.5).abs() < 1e-12);
        assert!((g.get(LEFT_SHOULDER).unwrap()[0] - 0.0).abs() < 1e-12);
        assert!((g.get(RIGHT_SHOULDER).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((g.get(NOSE).unwrap()[1] - 0.0).abs() < 1e-12);
        assert!(r.degenerate.left_hand && r.degenerate.right_hand && !r.degenerate.body);
    }

    #[test]
    fn head_fallback_when_shoulders_mostly_missing() {
        let with = frame(&[(LEFT_SHOULDER, [0.3, 0.4]), (RIGHT_SHOULDER, [0.5, 0.4]), (NECK, [0.4, 0.4]), (NOSE, [0.4, 0.3])]);
        let without = frame(&[(NECK, [0.4, 0.4]), (NOSE, [0.4, 0.2])]);
        let seq = PoseSequence::new(vec![with, without.clone(), without], 25.0, None, "x").unwrap();
        let (_, r) = normalize_sequence(&seq);
        assert_eq!(r.body_scale_source, BodyScaleSource::HeadToNeck);
        assert!((r.body_scale_used - (0.1 + 0.2 + 0.2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_goes_to_unit_square_keeping_aspect() {
        let f1 = frame(&[(LEFT_HAND_START, [0.2, 0.2]), (LEFT_HAND_START + 1, [0.6, 0.3])]);
        let f2 = frame(&[(LEFT_HAND_START + 4, [0.4, 0.25])]);
        let seq = PoseSequence::new(vec![f1, f2], 25.0, None, "x").unwrap();
        let (n, r) = normalize_sequence(&seq);
        let b = r.hand_boxes[0].unwrap();
        assert_eq!(b.min, [0.2, 0.2]);
        assert_eq!(b.max, [0.6, 0.3]);
        let p0 = n.frames()[0].get(LEFT_HAND_START).unwrap();
        let p1 = n.frames()[0].get(LEFT_HAND_START + 1).unwrap();
        assert!((p0[0] - 0.0).abs() < 1e-12 && (p0[1] - 0.375).abs() < 1e-12);
        assert!((p1[0] - 1.0).abs() < 1e-12 && (p1[1] - 0.625).abs() < 1e-12);
        assert!(!r.degenerate.left_hand);
        assert!(r.degenerate.right_hand);
        assert!(!n.frames()[0].is_present(RIGHT_HAND_START));
    }

    #[test]
    fn all_absent_passes_through_flagged() {
        let seq = PoseSequence::new(vec![SkeletalFrame::empty(); 4], 25.0, None, "x").unwrap();
        let (n, r) = normalize_sequence(&seq);
        assert_eq!(n, seq);
        assert!(r.degenerate.body && r.degenerate.left_hand && r.degenerate.right_hand);
        assert_eq!(r.body_scale_source, BodyScaleSource::Fallback);
    }

    #[test]
    fn single_point_hand_is_degenerate() {
        let f = frame(&[(RIGHT_HAND_START, [0.3, 0.3])]);
        let seq = PoseSequence::new(vec![f], 25.0, None, "x").unwrap();
        let (n, r) = normalize_sequence(&seq);
        assert!(r.degenerate.right_hand);
        assert_eq!(n.frames()[0].get(RIGHT_HAND_START), Some([0.3, 0.3]));
    }
}
