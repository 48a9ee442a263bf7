//! Per-image annotation data model, bundle I/O and value unification.

mod bundle;
mod classmap;
mod skeleton;
mod unify;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bundle::{
    load_bundle, write_bundle, BundleParts, Corpus, CorpusEntry, CorpusManifest, Manifest, CORPUS_FILE,
    MANIFEST_FILE, SALIENCY_FILE, SCENE_FILE,
};
pub use classmap::ClassMap;
pub use skeleton::{Joint, JointId, Skeleton, JOINT_COUNT};
pub use unify::{probability_score, unify, DetectionTensor, DetectorKind, TensorTriple, MAX_PROBABILITY};

/// Generic descriptor length.
pub const VGG_DIM: usize = 4096;
/// Object-detector label count (COCO).
pub const OD_CLASSES: u16 = 80;
/// Scene-parser label count (ADE20K).
pub const SP_CLASSES: u16 = 150;
/// Size of the merged semantic class space.
pub const MERGED_CLASSES: usize = 210;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Default for Gender {
    fn default() -> Self {
        Gender::Unknown
    }
}

/// One-hot gender encoding: male `[1,0,0]`, female `[0,1,0]`, unknown `[0,0,1]`.
pub fn gender_vector(gender: Gender) -> [f64; 3] {
    match gender {
        Gender::Male => [1.0, 0.0, 0.0],
        Gender::Female => [0.0, 1.0, 0.0],
        Gender::Unknown => [0.0, 0.0, 1.0],
    }
}

/// Portrait categories, in category-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Facial,
    Fullbody,
    Upperbody,
    Two,
    Group,
    Sideview,
    Leg,
    Noface,
    Hand,
    Nohead,
}

impl Category {
    pub const COUNT: usize = 10;

    pub const ALL: [Category; Category::COUNT] = [
        Category::Facial,
        Category::Fullbody,
        Category::Upperbody,
        Category::Two,
        Category::Group,
        Category::Sideview,
        Category::Leg,
        Category::Noface,
        Category::Hand,
        Category::Nohead,
    ];

    /// Zero-based position in the category vector.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Category> {
        Category::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Facial => "facial",
            Category::Fullbody => "fullbody",
            Category::Upperbody => "upperbody",
            Category::Two => "two",
            Category::Group => "group",
            Category::Sideview => "sideview",
            Category::Leg => "leg",
            Category::Noface => "noface",
            Category::Hand => "hand",
            Category::Nohead => "nohead",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Pixel-space box `[x_min, y_min, x_max, y_max]`, inclusive of the pixels
/// containing both corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    /// Covered pixel columns and rows as inclusive ranges.
    pub fn pixel_span(&self) -> ((usize, usize), (usize, usize)) {
        (
            (self.x_min.floor() as usize, self.x_max.floor() as usize),
            (self.y_min.floor() as usize, self.y_max.floor() as usize),
        )
    }

    /// Number of covered pixels.
    pub fn pixel_area(&self) -> usize {
        let ((c0, c1), (r0, r1)) = self.pixel_span();
        (c1 - c0 + 1) * (r1 - r0 + 1)
    }

    /// Pixel count shared with `other`.
    pub fn pixel_intersection(&self, other: &BoundingBox) -> usize {
        let ((a0, a1), (b0, b1)) = self.pixel_span();
        let ((c0, c1), (d0, d1)) = other.pixel_span();
        let cols = (a1.min(c1) + 1).saturating_sub(a0.max(c0));
        let rows = (b1.min(d1) + 1).saturating_sub(b0.max(d0));
        cols * rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    /// Object-detector class, 1..=80.
    pub class_id: u16,
    pub probability: f64,
    pub bbox: BoundingBox,
}

/// Scene-parser output: per-pixel class (0 = unlabeled) and probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub ids: Vec<u16>,
    pub probabilities: Vec<f32>,
}

/// Everything known about one image: detector outputs, descriptors and
/// metadata. Construct through [`load_bundle`] or [`BundleParts::parse`],
/// which enforce all invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationBundle {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<ObjectDetection>,
    pub scene: Option<LabelMap>,
    pub persons: Vec<Skeleton>,
    pub vgg: Vec<f32>,
    pub saliency: Option<Vec<f32>>,
    pub rating: f64,
    pub views: u64,
    pub gender: Gender,
    pub category: Option<Category>,
    pub tags: Vec<String>,
    /// Path of the source image, for display only.
    pub image_path: Option<PathBuf>,
}

impl AnnotationBundle {
    /// A valid bundle with no detections, zero descriptors and no metadata.
    pub fn empty(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        AnnotationBundle {
            image_id: image_id.into(),
            width,
            height,
            objects: Vec::new(),
            scene: None,
            persons: Vec::new(),
            vgg: vec![0.0; VGG_DIM],
            saliency: None,
            rating: 0.0,
            views: 0,
            gender: Gender::Unknown,
            category: None,
            tags: Vec::new(),
            image_path: None,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Checks every bundle invariant.
    pub fn validate(&self) -> crate::Result<()> {
        bundle::validate(self)
    }

    /// The person with the highest mean joint score; earliest wins ties.
    pub fn dominant_person(&self) -> Option<&Skeleton> {
        self.persons
            .iter()
            .filter(|p| p.present_count() > 0)
            .fold(None, |best: Option<&Skeleton>, p| match best {
                Some(b) if b.mean_score() >= p.mean_score() => Some(b),
                _ => Some(p),
            })
    }
}
