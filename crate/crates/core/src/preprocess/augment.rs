//! The four skeletal augmentations.
//!
//! Angles are in degrees; positive means counterclockwise in a y-up frame,
//! which is clockwise on screen because coordinates are y-down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AugmentationConfig, PreprocessError};
use crate::skeletal::schema::HAND_SLOTS;
use crate::skeletal::{Point, PoseSequence, Side, SkeletalFrame};

/// Center of whole-frame rotation.
pub const ROTATION_CENTER: Point = [0.5, 0.5];

/// Pivot joint for [`rotate_arm_joints`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmJoint {
    /// Rotates the forearm: the wrist and the whole hand.
    Elbow,
    /// Rotates the hand.
    Wrist,
}

/// Rotates `p` about `center` by `degrees`.
pub fn rotate_point(p: Point, center: Point, degrees: f64) -> Point {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let dx = p[0] - center[0];
    let dy = p[1] - center[1];
    [center[0] + dx * cos + dy * sin, center[1] - dx * sin + dy * cos]
}

/// Maps `x` into `[left, 1 - right]`.
pub fn squeeze_x(x: f64, left: f64, right: f64) -> f64 {
    left + (1.0 - left - right) * x
}

/// Which pair of unit-square corners a perspective warp displaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerspectiveEdge {
    Top,
    Bottom,
}

/// Moves the two corners of `edge` inward by `ratio` and interpolates every
/// other point bilinearly between the four displaced corners.
pub fn perspective_point(p: Point, edge: PerspectiveEdge, ratio: f64) -> Point {
    let (top_shift, bottom_shift) = match edge {
        PerspectiveEdge::Top => (ratio, 0.0),
        PerspectiveEdge::Bottom => (0.0, ratio),
    };
    let [u, v] = p;
    let tl = [top_shift, 0.0];
    let tr = [1.0 - top_shift, 0.0];
    let bl = [bottom_shift, 1.0];
    let br = [1.0 - bottom_shift, 1.0];
    let mut out = [0.0; 2];
    for a in 0..2 {
        out[a] = (1.0 - u) * (1.0 - v) * tl[a] + u * (1.0 - v) * tr[a] + (1.0 - u) * v * bl[a] + u * v * br[a];
    }
    out
}

fn rotate_slots(frame: &mut SkeletalFrame, slots: impl Iterator<Item = usize>, pivot: Point, degrees: f64) {
    for slot in slots {
        if let Some(p) = frame.get(slot) {
            frame.set(slot, rotate_point(p, pivot, degrees));
        }
    }
}

fn hand_slots(side: Side) -> std::ops::Range<usize> {
    side.hand_group().slots()
}

/// Rigidly rotates the chain distal to `joint` on `side` about that joint.
///
/// Elbow: the body wrist and all hand landmarks. Wrist: the hand landmarks.
/// A missing pivot makes this a no-op.
pub fn rotate_arm_joints(frame: &SkeletalFrame, joint: ArmJoint, side: Side, degrees: f64) -> SkeletalFrame {
    let mut out = frame.clone();
    let pivot_slot = match joint {
        ArmJoint::Elbow => side.elbow(),
        ArmJoint::Wrist => side.wrist(),
    };
    let Some(pivot) = frame.get(pivot_slot) else {
        return out;
    };
    if joint == ArmJoint::Elbow {
        rotate_slots(&mut out, std::iter::once(side.wrist()), pivot, degrees);
    }
    rotate_slots(&mut out, hand_slots(side), pivot, degrees);
    out
}

/// Arm rotation for normalized sequences, where each hand lives in its own
/// box-relative frame. The body wrist rotates about the elbow; hand
/// landmarks turn by the combined elbow and wrist angle about the hand's own
/// wrist landmark, which is the same rigid motion up to a translation that
/// hand normalization removes anyway.
fn rotate_arm_local(frame: &mut SkeletalFrame, side: Side, elbow_degrees: f64, wrist_degrees: f64) {
    if let Some(elbow) = frame.get(side.elbow()) {
        rotate_slots(frame, std::iter::once(side.wrist()), elbow, elbow_degrees);
    }
    let hand_wrist = hand_slots(side).start;
    debug_assert_eq!(hand_slots(side).len(), HAND_SLOTS);
    if let Some(pivot) = frame.get(hand_wrist) {
        rotate_slots(frame, hand_slots(side).skip(1), pivot, elbow_degrees + wrist_degrees);
    }
}

fn symmetric(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max == 0.0 {
        0.0
    } else {
        rng.gen_range(-max..=max)
    }
}

fn up_to(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max == 0.0 {
        0.0
    } else {
        rng.gen_range(0.0..=max)
    }
}

/// Applies each enabled augmentation with its probability, in the order
/// rotate, squeeze, perspective, arm rotation. Parameters are drawn once per
/// sequence and applied to every frame. Presence flags never change.
pub fn augment(seq: &PoseSequence, cfg: &AugmentationConfig, seed: u64) -> Result<PoseSequence, PreprocessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = seq.clone();

    if rng.gen::<f64>() < cfg.rotate.probability {
        let degrees = symmetric(&mut rng, cfg.rotate.max_degrees);
        for f in out.frames_mut() {
            f.map_present(|_, p| rotate_point(p, ROTATION_CENTER, degrees));
        }
    }

    if rng.gen::<f64>() < cfg.squeeze.probability {
        let left = up_to(&mut rng, cfg.squeeze.max_ratio);
        let right = up_to(&mut rng, cfg.squeeze.max_ratio);
        for f in out.frames_mut() {
            f.map_present(|_, p| [squeeze_x(p[0], left, right), p[1]]);
        }
    }

    if rng.gen::<f64>() < cfg.perspective.probability {
        let ratio = up_to(&mut rng, cfg.perspective.max_ratio);
        let edge = if rng.gen_bool(0.5) { PerspectiveEdge::Top } else { PerspectiveEdge::Bottom };
        for f in out.frames_mut() {
            f.map_present(|_, p| perspective_point(p, edge, ratio));
        }
    }

    if rng.gen::<f64>() < cfg.arm_rotate.probability {
        for side in Side::BOTH {
            let elbow = symmetric(&mut rng, cfg.arm_rotate.max_degrees);
            let wrist = symmetric(&mut rng, cfg.arm_rotate.max_degrees);
            for f in out.frames_mut() {
                rotate_arm_local(f, side, elbow, wrist);
            }
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::config::{RatioParams, RotationParams};
    use crate::skeletal::schema::{LEFT_ELBOW, LEFT_HAND_START, LEFT_SHOULDER, LEFT_WRIST, RIGHT_HAND_START};

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol
    }

    fn arm_frame() -> SkeletalFrame {
        let mut f = SkeletalFrame::empty();
        f.set(LEFT_SHOULDER, [0.4, 0.4]);
        f.set(LEFT_ELBOW, [0.4, 0.6]);
        f.set(LEFT_WRIST, [0.5, 0.7]);
        for j in 0..HAND_SLOTS {
            f.set(LEFT_HAND_START + j, [0.5 + 0.01 * j as f64, 0.72 + 0.005 * j as f64]);
        }
        f
    }

    #[test]
    fn quarter_turn_matches_convention() {
        assert!(close(rotate_point([0.7, 0.5], [0.5, 0.5], 90.0), [0.5, 0.3], 1e-12));
    }

    #[test]
    fn squeeze_is_affine() {
        assert!((squeeze_x(0.5, 0.1, 0.1) - 0.5).abs() < 1e-15);
        assert!((squeeze_x(0.0, 0.1, 0.1) - 0.1).abs() < 1e-15);
        assert!((squeeze_x(1.0, 0.1, 0.1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn perspective_moves_corners_only_on_chosen_edge() {
        assert_eq!(perspective_point([0.0, 0.0], PerspectiveEdge::Top, 0.1), [0.1, 0.0]);
        assert_eq!(perspective_point([1.0, 0.0], PerspectiveEdge::Top, 0.1), [0.9, 0.0]);
        assert_eq!(perspective_point([0.0, 1.0], PerspectiveEdge::Top, 0.1), [0.0, 1.0]);
        assert_eq!(perspective_point([1.0, 1.0], PerspectiveEdge::Bottom, 0.2), [0.8, 1.0]);
        assert!(close(perspective_point([0.5, 0.5], PerspectiveEdge::Top, 0.1), [0.5, 0.5], 1e-15));
        assert_eq!(perspective_point([0.3, 0.7], PerspectiveEdge::Top, 0.0), [0.3, 0.7]);
    }

    #[test]
    fn wrist_half_turn() {
        let mut f = SkeletalFrame::empty();
        f.set(LEFT_WRIST, [0.5, 0.5]);
        f.set(LEFT_HAND_START + 3, [0.6, 0.5]);
        let g = rotate_arm_joints(&f, ArmJoint::Wrist, Side::Left, 180.0);
        assert!(close(g.get(LEFT_HAND_START + 3).unwrap(), [0.4, 0.5], 1e-12));
        assert_eq!(g.get(LEFT_WRIST), Some([0.5, 0.5]));
    }

    #[test]
    fn zero_degrees_is_identity_and_missing_pivot_is_noop() {
        let f = arm_frame();
        assert_eq!(rotate_arm_joints(&f, ArmJoint::Elbow, Side::Left, 0.0), f);
        assert_eq!(rotate_arm_joints(&f, ArmJoint::Elbow, Side::Right, 30.0), f);
    }

    #[test]
    fn elbow_rotation_is_rigid_and_keeps_proximal() {
        let f = arm_frame();
        let g = rotate_arm_joints(&f, ArmJoint::Elbow, Side::Left, 37.0);
        assert_eq!(g.get(LEFT_SHOULDER), f.get(LEFT_SHOULDER));
        assert_eq!(g.get(LEFT_ELBOW), f.get(LEFT_ELBOW));
        let d = |fr: &SkeletalFrame, a: usize, b: usize| {
            let (p, q) = (fr.get(a).unwrap(), fr.get(b).unwrap());
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        assert!((d(&f, LEFT_ELBOW, LEFT_WRIST) - d(&g, LEFT_ELBOW, LEFT_WRIST)).abs() < 1e-9);
        assert!((d(&f, LEFT_WRIST, LEFT_HAND_START + 8) - d(&g, LEFT_WRIST, LEFT_HAND_START + 8)).abs() < 1e-9);
        assert_ne!(g.get(LEFT_WRIST), f.get(LEFT_WRIST));
    }

    fn seq() -> PoseSequence {
        let mut f = arm_frame();
        f.set(RIGHT_HAND_START, [0.2, 0.3]);
        f.set(RIGHT_HAND_START + 5, [0.25, 0.2]);
        PoseSequence::new(vec![f.clone(), f], 25.0, None, "a").unwrap()
    }

    #[test]
    fn disabled_config_is_identity() {
        let s = seq();
        assert_eq!(augment(&s, &AugmentationConfig::disabled(), 123).unwrap(), s);
        let mut zero_p = AugmentationConfig::default();
        for key in AugmentationConfig::FIELDS.iter().filter(|k| k.ends_with("probability")) {
            zero_p.set(key, 0.0).unwrap();
        }
        assert_eq!(augment(&s, &zero_p, 9).unwrap(), s);
    }

    #[test]
    fn deterministic_and_presence_preserving() {
        let s = seq();
        let cfg = AugmentationConfig {
            rotate: RotationParams { probability: 1.0, max_degrees: 20.0 },
            squeeze: RatioParams { probability: 1.0, max_ratio: 0.2 },
            perspective: RatioParams { probability: 1.0, max_ratio: 0.2 },
            arm_rotate: RotationParams { probability: 1.0, max_degrees: 10.0 },
            ..Default::default()
        };
        let a = augment(&s, &cfg, 42).unwrap();
        let b = augment(&s, &cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, s);
        assert_ne!(augment(&s, &cfg, 43).unwrap(), a);
        assert_eq!(a.presence(), s.presence());
        for f in a.frames() {
            for slot in 0..crate::skeletal::SLOT_COUNT {
                if !f.is_present(slot) {
                    assert_eq!(f.coords()[slot], [0.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = AugmentationConfig::default();
        cfg.squeeze.max_ratio = 0.7;
        assert!(matches!(augment(&seq(), &cfg, 1), Err(PreprocessError::Config(_))));
    }
}
