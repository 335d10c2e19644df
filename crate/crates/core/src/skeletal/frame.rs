use super::schema::{FRAME_DIM, SLOT_COUNT};
use super::SkeletalError;

/// A 2-D point in normalized image coordinates (x right, y down).
pub type Point = [f64; 2];

/// One video frame as 54 canonical landmarks.
///
/// Absent slots always hold exactly `(0, 0)`; the constructors enforce it.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletalFrame {
    coords: [Point; SLOT_COUNT],
    present: [bool; SLOT_COUNT],
}

impl Default for SkeletalFrame {
    fn default() -> Self {
        Self::empty()
    }
}

impl SkeletalFrame {
    /// A frame with every slot absent.
    pub fn empty() -> Self {
        Self {
            coords: [[0.0, 0.0]; SLOT_COUNT],
            present: [false; SLOT_COUNT],
        }
    }

    /// Builds a frame, rejecting absent slots whose coordinates are not `(0, 0)`.
    pub fn new(coords: [Point; SLOT_COUNT], present: [bool; SLOT_COUNT]) -> Result<Self, SkeletalError> {
        for slot in 0..SLOT_COUNT {
            if !present[slot] && coords[slot] != [0.0, 0.0] {
                return Err(SkeletalError::Sentinel { slot });
            }
        }
        Ok(Self { coords, present })
    }

    /// Builds a frame from per-slot optional points.
    pub fn from_points(points: &[Option<Point>]) -> Result<Self, SkeletalError> {
        if points.len() != SLOT_COUNT {
            return Err(SkeletalError::Arity {
                expected: SLOT_COUNT,
                found: points.len(),
            });
        }
        let mut frame = Self::empty();
        for (slot, p) in points.iter().enumerate() {
            if let Some(p) = p {
                frame.set(slot, *p);
            }
        }
        Ok(frame)
    }

    pub fn get(&self, slot: usize) -> Option<Point> {
        self.present[slot].then_some(self.coords[slot])
    }

    pub fn coords(&self) -> &[Point; SLOT_COUNT] {
        &self.coords
    }

    pub fn present(&self) -> &[bool; SLOT_COUNT] {
        &self.present
    }

    pub fn is_present(&self, slot: usize) -> bool {
        self.present[slot]
    }

    pub fn any_present(&self) -> bool {
        self.present.iter().any(|&p| p)
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// Marks `slot` present at `p`.
    pub fn set(&mut self, slot: usize, p: Point) {
        self.coords[slot] = p;
        self.present[slot] = true;
    }

    /// Marks `slot` absent and resets it to the `(0, 0)` sentinel.
    pub fn clear(&mut self, slot: usize) {
        self.coords[slot] = [0.0, 0.0];
        self.present[slot] = false;
    }

    /// Applies `f` to every present slot; absent slots are untouched.
    pub fn map_present(&mut self, mut f: impl FnMut(usize, Point) -> Point) {
        for slot in 0..SLOT_COUNT {
            if self.present[slot] {
                self.coords[slot] = f(slot, self.coords[slot]);
            }
        }
    }

    /// Flattens to `[x0, y0, x1, y1, ...]` in schema order.
    pub fn to_vector(&self) -> [f64; FRAME_DIM] {
        let mut out = [0.0; FRAME_DIM];
        for (slot, p) in self.coords.iter().enumerate() {
            out[2 * slot] = p[0];
            out[2 * slot + 1] = p[1];
        }
        out
    }
}

/// Ordered frames of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: Vec<SkeletalFrame>,
    pub fps: f64,
    pub label: Option<String>,
    pub source_id: String,
}

impl PoseSequence {
    pub fn new(
        frames: Vec<SkeletalFrame>,
        fps: f64,
        label: Option<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, SkeletalError> {
        if frames.is_empty() {
            return Err(SkeletalError::EmptyInput);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SkeletalError::InvalidFps(fps));
        }
        Ok(Self {
            frames,
            fps,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &[SkeletalFrame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [SkeletalFrame] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Presence mask of every frame, in order.
    pub fn presence(&self) -> Vec<[bool; SLOT_COUNT]> {
        self.frames.iter().map(|f| *f.present()).collect()
    }

    /// Returns a copy without frames that have no detected landmark at all.
    ///
    /// Returns `None` when every frame is empty.
    pub fn without_empty_frames(&self) -> Option<Self> {
        let frames: Vec<_> = self.frames.iter().filter(|f| f.any_present()).cloned().collect();
        if frames.is_empty() {
            return None;
        }
        Some(Self {
            frames,
            fps: self.fps,
            label: self.label.clone(),
            source_id: self.source_id.clone(),
        })
    }

    /// Same metadata, new frames.
    pub fn with_frames(&self, frames: Vec<SkeletalFrame>) -> Result<Self, SkeletalError> {
        Self::new(frames, self.fps, self.label.clone(), self.source_id.clone())
    }
}
