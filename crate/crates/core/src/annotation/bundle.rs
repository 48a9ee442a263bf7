//! Bundle directories on disk.
//!
//! A bundle is a directory holding `manifest.json` plus the optional
//! `sp.bin` (row-major little-endian u16 scene-parser ids followed by the f32
//! probability plane) and `saliency.bin` (row-major little-endian f32). A
//! corpus is a directory of bundle directories listed by `corpus.json`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AnnotationBundle, Category, Gender, Joint, JointId, LabelMap, ObjectDetection, Skeleton,
    OD_CLASSES, SP_CLASSES, VGG_DIM,
};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_FILE: &str = "sp.bin";
pub const SALIENCY_FILE: &str = "saliency.bin";
pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub joint_id: u8,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    #[serde(default = "present_default", skip_serializing_if = "is_true")]
    pub present: bool,
}

fn present_default() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// The JSON half of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default)]
    pub rating: f64,
    #[serde(default)]
    pub views: u64,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub objects: Vec<ObjectDetection>,
    #[serde(default)]
    pub persons: Vec<Vec<JointEntry>>,
    pub vgg: Vec<f32>,
}

/// Raw bundle contents, as read from a directory or received over the wire.
#[derive(Debug, Clone, Default)]
pub struct BundleParts {
    pub manifest: Vec<u8>,
    pub scene: Option<Vec<u8>>,
    pub saliency: Option<Vec<u8>>,
}

impl BundleParts {
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let optional = |name: &str| -> Result<Option<Vec<u8>>> {
            let path = dir.join(name);
            match fs::read(&path) {
                Ok(bytes) => Ok(Some(bytes)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(path, e)),
            }
        };
        Ok(BundleParts {
            manifest,
            scene: optional(SCENE_FILE)?,
            saliency: optional(SALIENCY_FILE)?,
        })
    }

    /// Decodes and validates. Relative `image_path`s resolve against `base`.
    pub fn parse(&self, base: Option<&Path>) -> Result<AnnotationBundle> {
        let manifest: Manifest = serde_json::from_slice(&self.manifest)
            .map_err(|e| Error::MalformedBundle(format!("manifest.json: {e}")))?;
        let pixels = manifest
            .width
            .checked_mul(manifest.height)
            .ok_or_else(|| Error::DimensionMismatch("image dimensions overflow".into()))?;

        let scene = match &self.scene {
            None => None,
            Some(bytes) => {
                if bytes.len() != pixels * 6 {
                    return Err(Error::DimensionMismatch(format!(
                        "sp.bin holds {} bytes, expected {} for {}x{}",
                        bytes.len(),
                        pixels * 6,
                        manifest.width,
                        manifest.height
                    )));
                }
                let (id_bytes, prob_bytes) = bytes.split_at(pixels * 2);
                Some(LabelMap {
                    ids: id_bytes
                        .chunks_exact(2)
                        .map(|c| u16::from_le_bytes([c[0], c[1]]))
                        .collect(),
                    probabilities: decode_f32(prob_bytes),
                })
            }
        };

        let saliency = match &self.saliency {
            None => None,
            Some(bytes) => {
                if bytes.len() != pixels * 4 {
                    return Err(Error::DimensionMismatch(format!(
                        "saliency.bin holds {} bytes, expected {}",
                        bytes.len(),
                        pixels * 4
                    )));
                }
                Some(decode_f32(bytes))
            }
        };

        let mut persons = Vec::with_capacity(manifest.persons.len());
        for (p, entries) in manifest.persons.iter().enumerate() {
            let mut skeleton = Skeleton::new();
            let mut seen = HashSet::new();
            for entry in entries {
                let id = JointId::from_id(entry.joint_id).ok_or_else(|| {
                    Error::ValueOutOfRange(format!("person {p}: joint id {}", entry.joint_id))
                })?;
                if !seen.insert(entry.joint_id) {
                    return Err(Error::MalformedBundle(format!(
                        "person {p}: joint id {} listed twice",
                        entry.joint_id
                    )));
                }
                if entry.present {
                    skeleton.set(
                        id,
                        Joint {
                            x: entry.x,
                            y: entry.y,
                            score: entry.score,
                        },
                    );
                }
            }
            persons.push(skeleton);
        }

        let image_path = manifest.image_path.as_ref().map(|p| {
            let p = PathBuf::from(p);
            match base {
                Some(base) if p.is_relative() => base.join(p),
                _ => p,
            }
        });

        let bundle = AnnotationBundle {
            image_id: manifest.image_id,
            width: manifest.width,
            height: manifest.height,
            objects: manifest.objects,
            scene,
            persons,
            vgg: manifest.vgg,
            saliency,
            rating: manifest.rating,
            views: manifest.views,
            gender: manifest.gender,
            category: manifest.category,
            tags: manifest.tags,
            image_path,
        };
        validate(&bundle)?;
        Ok(bundle)
    }
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn check_probability(p: f64, what: impl FnOnce() -> String) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ValueOutOfRange(format!("{}: probability {p} not in [0, 1)", what())))
    }
}

pub(super) fn validate(b: &AnnotationBundle) -> Result<()> {
    if b.image_id.is_empty() {
        return Err(Error::MalformedBundle("empty image_id".into()));
    }
    if b.vgg.len() != VGG_DIM {
        return Err(Error::MalformedBundle(format!(
            "vgg has {} entries, expected {VGG_DIM}",
            b.vgg.len()
        )));
    }
    if b.vgg.iter().any(|v| !v.is_finite()) {
        return Err(Error::ValueOutOfRange("vgg contains a non-finite value".into()));
    }
    if !(b.rating.is_finite() && b.rating >= 0.0) {
        return Err(Error::ValueOutOfRange(format!("rating {}", b.rating)));
    }
    let (w, h) = (b.width as f64, b.height as f64);
    for (i, obj) in b.objects.iter().enumerate() {
        if !(1..=OD_CLASSES).contains(&obj.class_id) {
            return Err(Error::ValueOutOfRange(format!("object {i}: class id {}", obj.class_id)));
        }
        check_probability(obj.probability, || format!("object {i}"))?;
        let bb = &obj.bbox;
        let inside = bb.x_min >= 0.0
            && bb.y_min >= 0.0
            && bb.x_min <= bb.x_max
            && bb.y_min <= bb.y_max
            && bb.x_max < w
            && bb.y_max < h;
        if !inside {
            return Err(Error::ValueOutOfRange(format!(
                "object {i}: box {:?} outside [0,{w})x[0,{h})",
                <[f64; 4]>::from(*bb)
            )));
        }
    }
    for (p, person) in b.persons.iter().enumerate() {
        for joint in person.joints.iter().flatten() {
            if !(joint.x.is_finite() && joint.y.is_finite()) {
                return Err(Error::ValueOutOfRange(format!("person {p}: non-finite joint")));
            }
            check_probability(joint.score, || format!("person {p} joint"))?;
        }
    }
    let pixels = b.pixel_count();
    if let Some(scene) = &b.scene {
        if scene.ids.len() != pixels || scene.probabilities.len() != pixels {
            return Err(Error::DimensionMismatch("scene plane size".into()));
        }
        for (i, (&id, &p)) in scene.ids.iter().zip(&scene.probabilities).enumerate() {
            if id > SP_CLASSES {
                return Err(Error::ValueOutOfRange(format!("sp pixel {i}: class id {id}")));
            }
            check_probability(p as f64, || format!("sp pixel {i}"))?;
        }
    }
    if let Some(s) = &b.saliency {
        if s.len() != pixels {
            return Err(Error::DimensionMismatch("saliency plane size".into()));
        }
        if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueOutOfRange(format!("saliency value {v} not in [0, 1]")));
        }
    }
    Ok(())
}

/// Reads and validates the bundle directory at `dir`.
pub fn load_bundle(dir: &Path) -> Result<AnnotationBundle> {
    BundleParts::read_dir(dir)?.parse(Some(dir))
}

impl AnnotationBundle {
    /// The manifest half of this bundle. `image_path` is written as given.
    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            image_path: self
                .image_path
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
            rating: self.rating,
            views: self.views,
            gender: self.gender,
            category: self.category,
            tags: self.tags.clone(),
            objects: self.objects.clone(),
            persons: self
                .persons
                .iter()
                .map(|s| {
                    JointId::ALL
                        .iter()
                        .filter_map(|&id| {
                            s.get(id).map(|j| JointEntry {
                                joint_id: id.id(),
                                x: j.x,
                                y: j.y,
                                score: j.score,
                                present: true,
                            })
                        })
                        .collect()
                })
                .collect(),
            vgg: self.vgg.clone(),
        }
    }

    /// Encodes this bundle into its on-disk parts.
    pub fn to_parts(&self) -> BundleParts {
        let manifest = serde_json::to_vec(&self.to_manifest()).expect("manifest serializes");
        let scene = self.scene.as_ref().map(|s| {
            let mut out = Vec::with_capacity(s.ids.len() * 6);
            s.ids.iter().for_each(|id| out.extend_from_slice(&id.to_le_bytes()));
            s.probabilities
                .iter()
                .for_each(|p| out.extend_from_slice(&p.to_le_bytes()));
            out
        });
        let saliency = self.saliency.as_ref().map(|s| {
            s.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()
        });
        BundleParts {
            manifest,
            scene,
            saliency,
        }
    }
}

/// Writes `bundle` as a bundle directory, creating `dir` if needed.
pub fn write_bundle(bundle: &AnnotationBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let parts = bundle.to_parts();
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(MANIFEST_FILE, &parts.manifest)?;
    if let Some(bytes) = &parts.scene {
        write(SCENE_FILE, bytes)?;
    }
    if let Some(bytes) = &parts.saliency {
        write(SALIENCY_FILE, bytes)?;
    }
    Ok(())
}

/// `corpus.json`: bundle directories relative to the corpus root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub bundles: Vec<String>,
}

/// Where one corpus image lives.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub dir: PathBuf,
    pub image_path: Option<PathBuf>,
}

/// A corpus directory and its ordered bundle list.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub bundles: Vec<PathBuf>,
}

impl Corpus {
    /// Opens `root/corpus.json`.
    pub fn open(root: &Path) -> Result<Corpus> {
        let path = root.join(CORPUS_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest = serde_json::from_slice(&text)
            .map_err(|e| Error::MalformedBundle(format!("corpus.json: {e}")))?;
        Ok(Corpus {
            root: root.to_path_buf(),
            bundles: manifest.bundles.iter().map(|b| root.join(b)).collect(),
        })
    }

    /// Opens `corpus.json` if present, otherwise lists every subdirectory
    /// holding a manifest, in name order.
    pub fn open_or_scan(root: &Path) -> Result<Corpus> {
        if root.join(CORPUS_FILE).exists() {
            return Corpus::open(root);
        }
        let mut bundles = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let path = entry.map_err(|e| Error::io(root, e))?.path();
            if path.join(MANIFEST_FILE).is_file() {
                bundles.push(path);
            }
        }
        bundles.sort();
        Ok(Corpus {
            root: root.to_path_buf(),
            bundles,
        })
    }

    /// Writes every bundle under `root/<image_id>` and a matching `corpus.json`.
    pub fn write(root: &Path, bundles: &[AnnotationBundle]) -> Result<Corpus> {
        let mut manifest = CorpusManifest::default();
        for b in bundles {
            write_bundle(b, &root.join(&b.image_id))?;
            manifest.bundles.push(b.image_id.clone());
        }
        let path = root.join(CORPUS_FILE);
        let text = serde_json::to_vec_pretty(&manifest).expect("corpus manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Corpus::open(root)
    }

    /// Maps each image id to its bundle directory and resolved image path,
    /// reading only the manifests.
    pub fn entries(&self) -> Result<BTreeMap<String, CorpusEntry>> {
        let mut out = BTreeMap::new();
        for dir in &self.bundles {
            let path = dir.join(MANIFEST_FILE);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let m: Manifest = serde_json::from_slice(&bytes)
                .map_err(|e| Error::MalformedBundle(format!("{}: {e}", path.display())))?;
            let entry = CorpusEntry {
                dir: dir.clone(),
                image_path: m.image_path.map(|p| dir.join(p)),
            };
            if out.insert(m.image_id.clone(), entry).is_some() {
                return Err(Error::DuplicateId(m.image_id));
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }
}
