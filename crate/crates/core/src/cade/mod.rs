//! Category detection: the portrait/landscape genre gate and the 10-way
//! portrait classifier (one-vs-one RBF SVMs over 40 person features).

mod features;
mod persist;
mod smo;
mod svm;

use serde::{Deserialize, Serialize};

use crate::annotation::{Category, ClassMap, DetectorKind, TensorTriple};
use crate::fusion::{merged_class, FusionResult};

pub use features::{extract_cade_features, CadeFeatures, CADE_FEATURES};
pub use smo::{solve_binary, BinarySolution, SmoParams};
pub use svm::{classify, train_mcmsvm, BinarySvm, Standardizer, SvmModel, SvmParams};

/// Scenery area above which a person-free image counts as a landscape.
pub const LANDSCAPE_AREA: f64 = 0.265;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    Portrait,
    Landscape,
    Other,
}

/// Fraction of pixels labeled with a present scenery class by the object
/// detector or the scene parser.
pub fn scenery_area(tensors: &TensorTriple, fusion: &FusionResult, map: &ClassMap) -> f64 {
    let total = tensors.width() * tensors.height();
    if total == 0 {
        return 0.0;
    }
    let is_scenery = |kind: DetectorKind, flat: usize| {
        merged_class(kind, tensors.get(kind).ids.as_slice()[flat], map)
            .is_some_and(|c| map.is_scenery(c) && fusion.present.contains(&c))
    };
    let covered = (0..total)
        .filter(|&f| is_scenery(DetectorKind::Od, f) || is_scenery(DetectorKind::Sp, f))
        .count();
    covered as f64 / total as f64
}

/// Portrait when a person is present, otherwise landscape when scenery
/// covers more than [`LANDSCAPE_AREA`] of the frame.
pub fn genre_gate(person_present: bool, scenery_area: f64) -> Genre {
    if person_present {
        Genre::Portrait
    } else if scenery_area > LANDSCAPE_AREA {
        Genre::Landscape
    } else {
        Genre::Other
    }
}

/// Genre of a fused bundle.
pub fn detect_genre(tensors: &TensorTriple, fusion: &FusionResult, map: &ClassMap) -> Genre {
    genre_gate(fusion.person_present, scenery_area(tensors, fusion, map))
}

/// One-hot category vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryVector(pub [f64; Category::COUNT]);

impl CategoryVector {
    pub fn one_hot(category: Category) -> Self {
        let mut v = [0.0; Category::COUNT];
        v[category.index()] = 1.0;
        CategoryVector(v)
    }

    pub fn zeros() -> Self {
        CategoryVector([0.0; Category::COUNT])
    }

    pub fn category(&self) -> Option<Category> {
        self.0
            .iter()
            .position(|&v| v == 1.0)
            .and_then(Category::from_index)
    }
}
