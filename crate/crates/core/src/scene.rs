//! Annotation data model shared by every other module.

use std::collections::HashSet;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_box, point_in_union, BBox, Point};

/// Number of channels in a [`SceneFeatures`] cell.
pub const FEATURE_DIM: usize = 6;

/// Channel layout of a feature cell.
pub mod channel {
    pub const FACE_MASK: usize = 0;
    pub const OBJECT_MASK: usize = 1;
    pub const PNF_MASK: usize = 2;
    pub const HEAD_MASK: usize = 3;
    pub const GAZE_ALIGNMENT: usize = 4;
    pub const HEAD_DISTANCE: usize = 5;
}

/// Looking-target category of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Object,
    Face,
    PersonNonFace,
    Noninclusive,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Object,
        Category::Face,
        Category::PersonNonFace,
        Category::Noninclusive,
    ];

    /// Face → 1, Object / PersonNonFace → 0, Noninclusive → None.
    pub fn binary(self) -> Option<u8> {
        match self {
            Category::Face => Some(1),
            Category::Object | Category::PersonNonFace => Some(0),
            Category::Noninclusive => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Object => "object",
            Category::Face => "face",
            Category::PersonNonFace => "person_non_face",
            Category::Noninclusive => "noninclusive",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split '{other}'"))),
        }
    }
}

/// Dense `height × width × FEATURE_DIM` grid standing in for the image.
///
/// Channels: face mask, object mask, person-non-face mask, child-head mask,
/// gaze alignment (cosine in `[-1, 1]`) and normalized head distance
/// (`[0, 1]`). Stored row-major, cell-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl SceneFeatures {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * FEATURE_DIM],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: format!("{height}x{width}x{FEATURE_DIM}"),
                actual: format!("{} values", data.len()),
            });
        }
        let f = Self {
            height,
            width,
            data,
        };
        f.validate().map_err(Error::InvalidInput)?;
        Ok(f)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn n_cells(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let k = (i * self.width + j) * FEATURE_DIM;
        &self.data[k..k + FEATURE_DIM]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f32] {
        let k = (i * self.width + j) * FEATURE_DIM;
        &mut self.data[k..k + FEATURE_DIM]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f32 {
        self.data[(i * self.width + j) * FEATURE_DIM + ch]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, ch: usize, v: f32) {
        self.data[(i * self.width + j) * FEATURE_DIM + ch] = v;
    }

    /// Range check: masks and distance in `[0, 1]`, alignment in `[-1, 1]`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (k, &v) in self.data.iter().enumerate() {
            let ch = k % FEATURE_DIM;
            let lo = if ch == channel::GAZE_ALIGNMENT { -1.0 } else { 0.0 };
            if !v.is_finite() || v < lo || v > 1.0 {
                let cell = k / FEATURE_DIM;
                return Err(format!(
                    "feature value {v} out of range at cell ({}, {}) channel {ch}",
                    cell / self.width,
                    cell % self.width
                ));
            }
        }
        Ok(())
    }
}

struct Row<'a>(&'a [f32]);
struct CellValues<'a>(&'a [f32]);

impl Serialize for CellValues<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &v in self.0 {
            // Mask channels are integral; write them without a fraction.
            if v.fract() == 0.0 && v.abs() < 1e6 {
                seq.serialize_element(&(v as i64))?;
            } else {
                seq.serialize_element(&v)?;
            }
        }
        seq.end()
    }
}

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len() / FEATURE_DIM))?;
        for cell in self.0.chunks_exact(FEATURE_DIM) {
            seq.serialize_element(&CellValues(cell))?;
        }
        seq.end()
    }
}

impl Serialize for SceneFeatures {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.height))?;
        for row in self.data.chunks_exact(self.width * FEATURE_DIM) {
            seq.serialize_element(&Row(row))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SceneFeatures {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nested: Vec<Vec<Vec<f32>>> = Vec::deserialize(d)?;
        let height = nested.len();
        let width = nested.first().map_or(0, Vec::len);
        if height == 0 || width == 0 {
            return Err(de::Error::custom("features grid must be non-empty"));
        }
        let mut data = Vec::with_capacity(height * width * FEATURE_DIM);
        for row in &nested {
            if row.len() != width {
                return Err(de::Error::custom("features grid rows have unequal length"));
            }
            for cell in row {
                if cell.len() != FEATURE_DIM {
                    return Err(de::Error::custom(format!(
                        "feature cell has {} channels, expected {FEATURE_DIM}",
                        cell.len()
                    )));
                }
                data.extend_from_slice(cell);
            }
        }
        Ok(SceneFeatures {
            height,
            width,
            data,
        })
    }
}

/// One frame's annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame_id: String,
    pub clip_id: String,
    pub width: u32,
    pub height: u32,
    pub child_head: BBox,
    pub adult_faces: Vec<BBox>,
    pub target_point: Point,
    pub target_box: Option<BBox>,
    pub target_category: Category,
    pub split: Split,
    pub features: Option<SceneFeatures>,
}

impl Annotation {
    /// Field names of the JSONL record, in serialization order.
    pub const FIELDS: [&'static str; 11] = [
        "frame_id",
        "clip_id",
        "width",
        "height",
        "child_head",
        "adult_faces",
        "target_point",
        "target_box",
        "target_category",
        "split",
        "features",
    ];

    /// Checks every annotation invariant; the error names the frame and the
    /// violated rule.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invariant(&self.frame_id, msg));
        if self.width == 0 || self.height == 0 {
            return fail(format!(
                "frame size {}x{} must be positive",
                self.width, self.height
            ));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if let Err(e) = self.child_head.validate() {
            return fail(format!("child_head: {e}"));
        }
        if !self.child_head.inside_frame(w, h) {
            return fail("child_head lies outside the frame".into());
        }
        for (k, face) in self.adult_faces.iter().enumerate() {
            if let Err(e) = face.validate() {
                return fail(format!("adult_faces[{k}]: {e}"));
            }
            if !face.inside_frame(w, h) {
                return fail(format!("adult_faces[{k}] lies outside the frame"));
            }
        }
        if let Some(tb) = &self.target_box {
            if let Err(e) = tb.validate() {
                return fail(format!("target_box: {e}"));
            }
        }
        let p = self.target_point;
        if !p.is_finite() {
            return fail("target_point is not finite".into());
        }
        if self.target_category != Category::Noninclusive {
            if !(0.0..w).contains(&p.x) || !(0.0..h).contains(&p.y) {
                return fail(format!(
                    "target_point ({}, {}) lies outside the frame",
                    p.x, p.y
                ));
            }
            if let Some(tb) = &self.target_box {
                if !point_in_box(p, tb) {
                    return fail("target_point lies outside target_box".into());
                }
            }
        }
        if self.target_category == Category::Face && !point_in_union(p, &self.adult_faces) {
            return fail("face target_point lies outside every adult face box".into());
        }
        if let Some(f) = &self.features {
            if let Err(e) = f.validate() {
                return fail(e);
            }
        }
        Ok(())
    }

    /// Grid-cell size in pixels `(cell_w, cell_h)` for a feature grid.
    pub fn cell_size(&self, grid_h: usize, grid_w: usize) -> (f64, f64) {
        (
            f64::from(self.width) / grid_w as f64,
            f64::from(self.height) / grid_h as f64,
        )
    }

    /// Pixel coordinates → grid-cell coordinates.
    pub fn to_cells(&self, p: Point, grid_h: usize, grid_w: usize) -> Point {
        let (cw, ch) = self.cell_size(grid_h, grid_w);
        Point::new(p.x / cw, p.y / ch)
    }

    /// Grid-cell coordinates → pixel coordinates.
    pub fn to_pixels(&self, p: Point, grid_h: usize, grid_w: usize) -> Point {
        let (cw, ch) = self.cell_size(grid_h, grid_w);
        Point::new(p.x * cw, p.y * ch)
    }

    /// Adult face boxes expressed in grid-cell units.
    pub fn faces_in_cells(&self, grid_h: usize, grid_w: usize) -> Vec<BBox> {
        let (cw, ch) = self.cell_size(grid_h, grid_w);
        self.adult_faces
            .iter()
            .map(|b| b.scale(1.0 / cw, 1.0 / ch))
            .collect()
    }

    pub fn features(&self) -> Result<&SceneFeatures> {
        self.features.as_ref().ok_or_else(|| Error::MissingFeatures {
            frame_id: self.frame_id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Val => self.val += 1,
            Split::Test => self.test += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub object: usize,
    pub face: usize,
    pub person_non_face: usize,
    pub noninclusive: usize,
}

impl CategoryCounts {
    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::Object => self.object,
            Category::Face => self.face,
            Category::PersonNonFace => self.person_non_face,
            Category::Noninclusive => self.noninclusive,
        }
    }

    fn bump(&mut self, c: Category) {
        match c {
            Category::Object => self.object += 1,
            Category::Face => self.face += 1,
            Category::PersonNonFace => self.person_non_face += 1,
            Category::Noninclusive => self.noninclusive += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.object + self.face + self.person_non_face + self.noninclusive
    }
}

/// Provenance and summary counts of a [`Dataset`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub n_frames: usize,
    pub splits: SplitCounts,
    pub categories: CategoryCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub annotations: Vec<Annotation>,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    /// Builds a dataset and fills the summary counts.
    pub fn new(annotations: Vec<Annotation>) -> Self {
        let mut ds = Dataset {
            annotations,
            metadata: DatasetMetadata::default(),
        };
        ds.metadata = ds.recount(None, None);
        ds
    }

    pub fn with_provenance(mut self, config_hash: String, seed: u64) -> Self {
        self.metadata.config_hash = Some(config_hash);
        self.metadata.seed = Some(seed);
        self
    }

    fn recount(&self, config_hash: Option<String>, seed: Option<u64>) -> DatasetMetadata {
        let mut splits = SplitCounts::default();
        let mut categories = CategoryCounts::default();
        for a in &self.annotations {
            splits.bump(a.split);
            categories.bump(a.target_category);
        }
        DatasetMetadata {
            config_hash,
            seed,
            n_frames: self.annotations.len(),
            splits,
            categories,
        }
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Annotation> {
        self.annotations.iter().filter(|a| a.split == split).collect()
    }

    /// Frames of a split with a binary label (Noninclusive dropped).
    pub fn labeled_split(&self, split: Split) -> Vec<&Annotation> {
        self.annotations
            .iter()
            .filter(|a| a.split == split && a.target_category.binary().is_some())
            .collect()
    }

    /// Per-frame invariants, unique ids and consistent metadata.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.annotations.len());
        for a in &self.annotations {
            a.validate()?;
            if !seen.insert(a.frame_id.as_str()) {
                return Err(Error::invariant(&a.frame_id, "duplicate frame_id"));
            }
        }
        let fresh = self.recount(self.metadata.config_hash.clone(), self.metadata.seed);
        if fresh != self.metadata {
            return Err(Error::InvalidInput(
                "dataset metadata counts disagree with the annotations".into(),
            ));
        }
        Ok(())
    }

    /// Requires every split to be non-empty (needed before training).
    pub fn require_all_splits(&self) -> Result<()> {
        for s in Split::ALL {
            if self.metadata.splits.get(s) == 0 {
                return Err(Error::EmptySplit(s.to_string()));
            }
        }
        Ok(())
    }

    /// Drops Noninclusive frames and refreshes the counts.
    pub fn filter_noninclusive(mut self) -> Self {
        self.annotations
            .retain(|a| a.target_category != Category::Noninclusive);
        let hash = self.metadata.config_hash.take();
        self.metadata = self.recount(hash, self.metadata.seed);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_annotation(id: &str) -> Annotation {
        Annotation {
            frame_id: id.into(),
            clip_id: "clip0".into(),
            width: 100,
            height: 80,
            child_head: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            adult_faces: vec![BBox::new(50.0, 10.0, 60.0, 20.0).unwrap()],
            target_point: Point::new(55.0, 15.0),
            target_box: Some(BBox::new(50.0, 10.0, 60.0, 20.0).unwrap()),
            target_category: Category::Face,
            split: Split::Train,
            features: None,
        }
    }

    #[test]
    fn binary_projection() {
        assert_eq!(Category::Face.binary(), Some(1));
        assert_eq!(Category::Object.binary(), Some(0));
        assert_eq!(Category::PersonNonFace.binary(), Some(0));
        assert_eq!(Category::Noninclusive.binary(), None);
    }

    #[test]
    fn valid_annotation_passes() {
        sample_annotation("f0").validate().unwrap();
    }

    #[test]
    fn face_target_outside_faces_rejected() {
        let mut a = sample_annotation("f1");
        a.target_point = Point::new(30.0, 30.0);
        a.target_box = None;
        let err = a.validate().unwrap_err().to_string();
        assert!(err.contains("f1"), "{err}");
        assert!(err.contains("adult face"), "{err}");
    }

    #[test]
    fn target_outside_frame_rejected_unless_noninclusive() {
        let mut a = sample_annotation("f2");
        a.target_category = Category::Object;
        a.target_box = None;
        a.target_point = Point::new(100.0, 5.0);
        assert!(a.validate().is_err());
        a.target_category = Category::Noninclusive;
        a.validate().unwrap();
    }

    #[test]
    fn head_outside_frame_rejected() {
        let mut a = sample_annotation("f3");
        a.child_head = BBox::new(95.0, 0.0, 105.0, 10.0).unwrap();
        assert!(a.validate().unwrap_err().to_string().contains("child_head"));
    }

    #[test]
    fn target_outside_target_box_rejected() {
        let mut a = sample_annotation("f4");
        a.adult_faces.push(BBox::new(70.0, 10.0, 80.0, 20.0).unwrap());
        a.target_point = Point::new(75.0, 15.0);
        assert!(a.validate().unwrap_err().to_string().contains("target_box"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let ds = Dataset::new(vec![sample_annotation("a"), sample_annotation("a")]);
        assert!(ds.validate().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn metadata_counts_checked() {
        let mut ds = Dataset::new(vec![sample_annotation("a"), sample_annotation("b")]);
        ds.validate().unwrap();
        assert_eq!(ds.metadata.categories.face, 2);
        ds.metadata.splits.train = 7;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn features_round_trip_through_json() {
        let mut f = SceneFeatures::zeros(2, 3);
        f.set(0, 1, channel::FACE_MASK, 1.0);
        f.set(1, 2, channel::GAZE_ALIGNMENT, -0.25);
        f.set(1, 2, channel::HEAD_DISTANCE, 0.1234);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with("[[[0,0,0,0,0,0],[1,0,0,0,0,0]"), "{s}");
        let back: SceneFeatures = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn ragged_features_rejected() {
        let bad = "[[[0,0,0,0,0,0]],[[0,0,0,0,0,0],[0,0,0,0,0,0]]]";
        assert!(serde_json::from_str::<SceneFeatures>(bad).is_err());
        let short = "[[[0,0,0,0,0]]]";
        assert!(serde_json::from_str::<SceneFeatures>(short).is_err());
    }
}
