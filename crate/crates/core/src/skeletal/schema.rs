//! The canonical 54-slot landmark layout.
//!
//! Slot order is fixed: 12 body slots, then 21 left-hand slots, then 21
//! right-hand slots. Hand slots follow the 21-point hand model: the wrist,
//! then four joints per finger from thumb to little finger, base to tip.

use std::fmt;

/// Total number of canonical slots.
pub const SLOT_COUNT: usize = 54;
/// Number of body slots (5 head landmarks, neck, shoulders, elbows, wrists).
pub const BODY_SLOTS: usize = 12;
/// Number of slots per hand.
pub const HAND_SLOTS: usize = 21;
/// Width of a flattened frame vector (x and y per slot).
pub const FRAME_DIM: usize = SLOT_COUNT * 2;

pub const NOSE: usize = 0;
pub const NECK: usize = 1;
pub const LEFT_EYE: usize = 2;
pub const RIGHT_EYE: usize = 3;
pub const LEFT_EAR: usize = 4;
pub const RIGHT_EAR: usize = 5;
pub const LEFT_SHOULDER: usize = 6;
pub const RIGHT_SHOULDER: usize = 7;
pub const LEFT_ELBOW: usize = 8;
pub const RIGHT_ELBOW: usize = 9;
pub const LEFT_WRIST: usize = 10;
pub const RIGHT_WRIST: usize = 11;

/// First slot of the left hand group.
pub const LEFT_HAND_START: usize = BODY_SLOTS;
/// First slot of the right hand group.
pub const RIGHT_HAND_START: usize = BODY_SLOTS + HAND_SLOTS;

const BODY_NAMES: [&str; BODY_SLOTS] = [
    "nose",
    "neck",
    "leftEye",
    "rightEye",
    "leftEar",
    "rightEar",
    "leftShoulder",
    "rightShoulder",
    "leftElbow",
    "rightElbow",
    "leftWrist",
    "rightWrist",
];

/// Joint names of the 21-point hand model, in slot order.
pub const HAND_JOINT_NAMES: [&str; HAND_SLOTS] = [
    "wrist",
    "thumbCMC",
    "thumbMP",
    "thumbIP",
    "thumbTip",
    "indexMCP",
    "indexPIP",
    "indexDIP",
    "indexTip",
    "middleMCP",
    "middlePIP",
    "middleDIP",
    "middleTip",
    "ringMCP",
    "ringPIP",
    "ringDIP",
    "ringTip",
    "littleMCP",
    "littlePIP",
    "littleDIP",
    "littleTip",
];

const HEAD_SLOTS: [usize; 5] = [NOSE, LEFT_EYE, RIGHT_EYE, LEFT_EAR, RIGHT_EAR];

/// Landmark group a slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Body,
    LeftHand,
    RightHand,
}

/// Which side of the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn hand_group(self) -> Group {
        match self {
            Side::Left => Group::LeftHand,
            Side::Right => Group::RightHand,
        }
    }

    pub fn shoulder(self) -> usize {
        match self {
            Side::Left => LEFT_SHOULDER,
            Side::Right => RIGHT_SHOULDER,
        }
    }

    pub fn elbow(self) -> usize {
        match self {
            Side::Left => LEFT_ELBOW,
            Side::Right => RIGHT_ELBOW,
        }
    }

    pub fn wrist(self) -> usize {
        match self {
            Side::Left => LEFT_WRIST,
            Side::Right => RIGHT_WRIST,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Body, Group::LeftHand, Group::RightHand];

    /// Slot index range covered by this group.
    pub fn slots(self) -> std::ops::Range<usize> {
        match self {
            Group::Body => 0..BODY_SLOTS,
            Group::LeftHand => LEFT_HAND_START..LEFT_HAND_START + HAND_SLOTS,
            Group::RightHand => RIGHT_HAND_START..RIGHT_HAND_START + HAND_SLOTS,
        }
    }
}

/// Accessors over the fixed canonical layout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CanonicalSchema;

impl CanonicalSchema {
    pub fn len(&self) -> usize {
        SLOT_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Slot names in canonical order.
    pub fn names(&self) -> &'static [String] {
        static NAMES: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();
        NAMES.get_or_init(|| {
            let mut names: Vec<String> = BODY_NAMES.iter().map(|s| s.to_string()).collect();
            for side in ["left", "right"] {
                names.extend(HAND_JOINT_NAMES.iter().map(|j| format!("{j}_{side}")));
            }
            names
        })
    }

    pub fn name(&self, slot: usize) -> &'static str {
        &self.names()[slot]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    pub fn group(&self, slot: usize) -> Group {
        if slot < BODY_SLOTS {
            Group::Body
        } else if slot < RIGHT_HAND_START {
            Group::LeftHand
        } else {
            Group::RightHand
        }
    }

    /// The five head landmarks among the body slots.
    pub fn head_slots(&self) -> &'static [usize] {
        &HEAD_SLOTS
    }

    /// Hand-local joint index (0..21) to canonical slot.
    pub fn hand_slot(&self, side: Side, joint: usize) -> usize {
        debug_assert!(joint < HAND_SLOTS);
        match side {
            Side::Left => LEFT_HAND_START + joint,
            Side::Right => RIGHT_HAND_START + joint,
        }
    }
}
