//! Request and response bodies.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use captain_core::annotation::{AnnotationBundle, BundleParts, Category, ClassMap};
use captain_core::cade::Genre;
use captain_core::index::{Block, CadeSource, Decomposition, FeatureRecord};
use captain_core::matching::ShotReport;
use captain_core::retrieval::{Ranked, ScoreBreakdown};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// A bundle sent over the wire: the manifest as JSON, the binary planes as
/// base64 of their on-disk bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePayload {
    pub manifest: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<String>,
}

impl BundlePayload {
    pub fn from_bundle(bundle: &AnnotationBundle) -> Self {
        let parts = bundle.to_parts();
        BundlePayload {
            manifest: serde_json::from_slice(&parts.manifest).expect("manifest is JSON"),
            sp: parts.scene.map(|b| STANDARD.encode(b)),
            saliency: parts.saliency.map(|b| STANDARD.encode(b)),
        }
    }

    pub fn decode(&self) -> Result<AnnotationBundle, ApiError> {
        let plane = |name: &str, s: &Option<String>| -> Result<Option<Vec<u8>>, ApiError> {
            s.as_ref()
                .map(|s| STANDARD.decode(s).map_err(|e| ApiError::malformed_bundle(format!("{name}: {e}"))))
                .transpose()
        };
        let parts = BundleParts {
            manifest: serde_json::to_vec(&self.manifest).map_err(|e| ApiError::malformed_bundle(e.to_string()))?,
            scene: plane("sp", &self.sp)?,
            saliency: plane("saliency", &self.saliency)?,
        };
        Ok(parts.parse(None)?)
    }
}

/// `POST /sessions`: exactly one of the two fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<BundlePayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassImportance {
    pub class: u16,
    pub name: Option<String>,
    pub importance: f64,
}

/// What the decomposition found. Fields that need the source bundle are
/// absent when the session was opened from a bare model row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub image_id: String,
    pub genre: Option<Genre>,
    pub person_present: Option<bool>,
    pub category: Option<Category>,
    pub cade_source: Option<CadeSource>,
    pub top_importance: Vec<ClassImportance>,
    pub pose_memberships: Option<Vec<f64>>,
}

fn named(map: &ClassMap, pairs: impl IntoIterator<Item = (u16, f64)>) -> Vec<ClassImportance> {
    pairs
        .into_iter()
        .map(|(class, importance)| ClassImportance {
            class,
            name: map.name(class).map(str::to_string),
            importance,
        })
        .collect()
}

impl DecompositionSummary {
    pub fn from_decomposition(d: &Decomposition, map: &ClassMap) -> Self {
        DecompositionSummary {
            image_id: d.record.image_id.clone(),
            genre: Some(d.genre),
            person_present: Some(d.person_present),
            category: d.category,
            cade_source: Some(d.cade_source),
            top_importance: named(map, d.top_importance.iter().copied()),
            pose_memberships: d.pose_memberships.clone(),
        }
    }

    pub fn from_record(r: &FeatureRecord, map: &ClassMap) -> Self {
        let mut top: Vec<(u16, f64)> = r
            .iod
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, &v)| (k as u16 + 1, v as f64))
            .collect();
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        top.truncate(5);
        DecompositionSummary {
            image_id: r.image_id.clone(),
            genre: None,
            person_present: None,
            category: r.category(),
            cade_source: None,
            top_importance: named(map, top),
            pose_memberships: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub summary: DecompositionSummary,
}

/// `POST /sessions/{id}/rank`. Missing weights mean uniform; missing
/// blocks inside `weights` mean 0.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankRequest {
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub image_id: String,
    pub score: f64,
    pub breakdown: ScoreBreakdown,
    pub image_url: String,
}

impl From<Ranked> for RankedItem {
    fn from(r: Ranked) -> Self {
        RankedItem {
            image_url: format!("/images/{}", r.image_id),
            image_id: r.image_id,
            score: r.score,
            breakdown: r.breakdown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub session_id: String,
    /// The normalized weights actually applied.
    pub weights: BTreeMap<Block, f64>,
    pub top_k: usize,
    pub results: Vec<RankedItem>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StyleSetRequest {
    #[serde(default)]
    pub preferred: Vec<String>,
    #[serde(default)]
    pub ignored: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSetResponse {
    pub session_id: String,
    pub preferred: Vec<String>,
    pub ignored: Vec<String>,
}

/// `POST /sessions/{id}/shots`. `q` is the pose-distance exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotsRequest {
    pub shots: Vec<BundlePayload>,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotsResponse {
    pub session_id: String,
    #[serde(flatten)]
    pub report: ShotReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub path: Option<String>,
    pub rows: usize,
    pub has_classifier: bool,
    pub has_clusters: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: Option<ModelInfo>,
    pub corpus_images: usize,
    pub sessions: usize,
}
