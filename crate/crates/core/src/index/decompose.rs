use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{to_f32, FeatureRecord};
use crate::annotation::{gender_vector, unify, AnnotationBundle, Category, ClassMap};
use crate::arpose::{image_pose, PoseClusters};
use crate::cade::{classify, detect_genre, extract_cade_features, CategoryVector, Genre, SvmModel};
use crate::fusion::{fuse, Thresholds};
use crate::{Error, Result};

pub const SVM_FILE: &str = "cade.svm";
pub const THRESHOLDS_FILE: &str = "thresholds.txt";
pub const CLASS_MAP_FILE: &str = "class_map.json";
pub const CLUSTERS_FILE: &str = "clusters.json";

/// Where a record's category vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CadeSource {
    /// Predicted by the trained classifier.
    Model,
    /// No classifier loaded; the bundle's ground-truth label was used.
    Label,
    /// Not a portrait, or nothing to go on.
    None,
}

/// A record plus the intermediate results worth showing to a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub record: FeatureRecord,
    pub genre: Genre,
    pub person_present: bool,
    pub present_classes: BTreeSet<u16>,
    pub uncertain_classes: BTreeSet<u16>,
    pub category: Option<Category>,
    pub cade_source: CadeSource,
    /// Up to five `(merged class, importance)` pairs, largest first.
    pub top_importance: Vec<(u16, f64)>,
    /// Fuzzy pose-cluster memberships, when clusters are loaded and the
    /// image has a usable pose.
    pub pose_memberships: Option<Vec<f64>>,
}

/// Everything needed to turn a bundle into a [`FeatureRecord`].
#[derive(Debug, Clone, Default)]
pub struct Decomposer {
    pub class_map: ClassMap,
    pub thresholds: Thresholds,
    pub svm: Option<SvmModel>,
    pub clusters: Option<PoseClusters>,
}

impl Decomposer {
    /// Loads the optional configuration files kept next to a model; missing
    /// files fall back to defaults.
    pub fn from_model_dir(dir: &Path) -> Result<Decomposer> {
        let path = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        let class_map = match path(CLASS_MAP_FILE) {
            Some(p) => ClassMap::load(&p)?,
            None => ClassMap::default(),
        };
        let thresholds = match path(THRESHOLDS_FILE) {
            Some(p) => Thresholds::load(&p)?,
            None => Thresholds::default(),
        };
        let svm = path(SVM_FILE).map(|p| SvmModel::load(&p)).transpose()?;
        let clusters = match path(CLUSTERS_FILE) {
            Some(p) => {
                let text = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                Some(
                    serde_json::from_slice(&text)
                        .map_err(|e| Error::ModelFormat(format!("{}: {e}", p.display())))?,
                )
            }
            None => None,
        };
        Ok(Decomposer {
            class_map,
            thresholds,
            svm,
            clusters,
        })
    }

    pub fn decompose(&self, bundle: &AnnotationBundle) -> Result<FeatureRecord> {
        self.decompose_detailed(bundle).map(|d| d.record)
    }

    /// Unify, fuse, categorize, pose, then assemble.
    pub fn decompose_detailed(&self, bundle: &AnnotationBundle) -> Result<Decomposition> {
        let map = &self.class_map;
        let tensors = unify(bundle);
        let fusion = fuse(bundle, &tensors, map, &self.thresholds);
        let genre = detect_genre(&tensors, &fusion, map);

        let (cade, cade_source) = match (genre, &self.svm) {
            (Genre::Portrait, Some(model)) => {
                let features = extract_cade_features(bundle, map, &self.thresholds);
                (classify(model, features.as_slice())?, CadeSource::Model)
            }
            (Genre::Portrait, None) => match bundle.category {
                Some(c) => (CategoryVector::one_hot(c), CadeSource::Label),
                None => (CategoryVector::zeros(), CadeSource::None),
            },
            _ => (CategoryVector::zeros(), CadeSource::None),
        };

        let pose = if fusion.person_present { image_pose(bundle) } else { None };
        let pose_memberships = match (&pose, &self.clusters) {
            (Some(p), Some(c)) => Some(c.memberships(p)),
            _ => None,
        };

        let record = FeatureRecord {
            image_id: bundle.image_id.clone(),
            vgg: bundle.vgg.clone(),
            iod: to_f32(fusion.importance.as_slice()),
            cade: to_f32(&cade.0),
            arpose: pose.as_deref().map_or_else(|| vec![0.0; crate::arpose::POSE_DIM], to_f32),
            stat: vec![bundle.rating as f32, bundle.views as f32],
            gender: to_f32(&gender_vector(bundle.gender)),
        };
        Ok(Decomposition {
            record,
            genre,
            person_present: fusion.person_present,
            present_classes: fusion.present.clone(),
            uncertain_classes: fusion.presence.uncertain.clone(),
            category: cade.category(),
            cade_source,
            top_importance: fusion.importance.top(5),
            pose_memberships,
        })
    }
}
