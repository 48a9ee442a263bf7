//! Value unification: rasterizes every detector's output into a per-pixel
//! `(class id, score)` plane pair with score `-log2(1 - p)`.

use serde::{Deserialize, Serialize};

use super::AnnotationBundle;
use crate::grid::Plane;

/// Probabilities are clamped here so scores stay finite (at most 20).
pub const MAX_PROBABILITY: f64 = 1.0 - 1.0 / (1u64 << 20) as f64;

/// `-log2(1 - p)` with `p` clamped to `[0, MAX_PROBABILITY]`.
#[inline]
pub fn probability_score(p: f64) -> f64 {
    let p = p.clamp(0.0, MAX_PROBABILITY);
    if p == 0.0 {
        0.0
    } else {
        -(1.0 - p).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Object detector.
    Od,
    /// Scene parser.
    Sp,
    /// Pose estimator.
    Pe,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Od, DetectorKind::Sp, DetectorKind::Pe];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Od => "od",
            DetectorKind::Sp => "sp",
            DetectorKind::Pe => "pe",
        }
    }

    pub fn parse(s: &str) -> Option<DetectorKind> {
        DetectorKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One detector's unified output. `ids` is 0 where nothing was detected and
/// `scores` is 0 exactly there.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTensor {
    pub kind: DetectorKind,
    pub ids: Plane<u16>,
    pub scores: Plane<f64>,
    /// Clamped probabilities behind `scores`.
    pub probabilities: Plane<f64>,
}

impl DetectionTensor {
    pub fn empty(kind: DetectorKind, width: usize, height: usize) -> Self {
        DetectionTensor {
            kind,
            ids: Plane::filled(width, height, 0),
            scores: Plane::filled(width, height, 0.0),
            probabilities: Plane::filled(width, height, 0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.ids.width()
    }

    pub fn height(&self) -> usize {
        self.ids.height()
    }

    #[inline]
    fn set(&mut self, flat: usize, id: u16, p: f64) {
        let p = p.clamp(0.0, MAX_PROBABILITY);
        self.ids.as_mut_slice()[flat] = id;
        self.probabilities.as_mut_slice()[flat] = p;
        self.scores.as_mut_slice()[flat] = probability_score(p);
    }

    /// Builds a tensor straight from per-pixel `(id, probability)` pairs.
    /// Pixels with probability 0 are recorded as undetected.
    pub fn from_pixels(kind: DetectorKind, width: usize, height: usize, pixels: &[(u16, f64)]) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count");
        let mut t = DetectionTensor::empty(kind, width, height);
        for (flat, &(id, p)) in pixels.iter().enumerate() {
            if id != 0 && p > 0.0 {
                t.set(flat, id, p);
            }
        }
        t
    }
}

/// The object-detector, scene-parser and pose-estimator tensors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTriple {
    pub od: DetectionTensor,
    pub sp: DetectionTensor,
    pub pe: DetectionTensor,
}

impl TensorTriple {
    pub fn get(&self, kind: DetectorKind) -> &DetectionTensor {
        match kind {
            DetectorKind::Od => &self.od,
            DetectorKind::Sp => &self.sp,
            DetectorKind::Pe => &self.pe,
        }
    }

    pub fn width(&self) -> usize {
        self.od.width()
    }

    pub fn height(&self) -> usize {
        self.od.height()
    }
}

/// Radius of the disc a pose joint is rasterized as.
pub fn joint_radius(width: usize, height: usize) -> f64 {
    (0.01 * width.max(height) as f64).round().max(2.0)
}

/// Rasterizes the bundle's detector outputs.
///
/// Overlapping boxes resolve to the highest probability, then the lower
/// class id. Joints become filled discs of [`joint_radius`] with the same
/// precedence by score and joint id.
pub fn unify(bundle: &AnnotationBundle) -> TensorTriple {
    let (w, h) = (bundle.width, bundle.height);

    let mut od = DetectionTensor::empty(DetectorKind::Od, w, h);
    let mut order: Vec<_> = bundle.objects.iter().filter(|o| o.probability > 0.0).collect();
    order.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.class_id.cmp(&b.class_id))
    });
    for obj in order {
        let ((c0, c1), (r0, r1)) = obj.bbox.pixel_span();
        for row in r0..=r1.min(h.saturating_sub(1)) {
            for col in c0..=c1.min(w.saturating_sub(1)) {
                let flat = row * w + col;
                if od.ids.as_slice()[flat] == 0 {
                    od.set(flat, obj.class_id, obj.probability);
                }
            }
        }
    }

    let mut sp = DetectionTensor::empty(DetectorKind::Sp, w, h);
    if let Some(scene) = &bundle.scene {
        for (flat, (&id, &p)) in scene.ids.iter().zip(&scene.probabilities).enumerate() {
            if id != 0 && p > 0.0 {
                sp.set(flat, id, p as f64);
            }
        }
    }

    let mut pe = DetectionTensor::empty(DetectorKind::Pe, w, h);
    let radius = joint_radius(w, h);
    let mut joints: Vec<(u8, f64, f64, f64)> = bundle
        .persons
        .iter()
        .flat_map(|s| {
            super::JointId::ALL
                .iter()
                .filter_map(move |&id| s.get(id).map(|j| (id.id(), j.x, j.y, j.score)))
        })
        .filter(|j| j.3 > 0.0)
        .collect();
    joints.sort_by(|a, b| b.3.total_cmp(&a.3).then(a.0.cmp(&b.0)));
    for (id, x, y, p) in joints {
        let r0 = (y - radius).ceil().max(0.0) as usize;
        let c0 = (x - radius).ceil().max(0.0) as usize;
        let r1 = (y + radius).floor();
        let c1 = (x + radius).floor();
        if r1 < 0.0 || c1 < 0.0 {
            continue;
        }
        let r1 = (r1 as usize).min(h.saturating_sub(1));
        let c1 = (c1 as usize).min(w.saturating_sub(1));
        if w == 0 || h == 0 {
            continue;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                let (dx, dy) = (col as f64 - x, row as f64 - y);
                if dx * dx + dy * dy <= radius * radius {
                    let flat = row * w + col;
                    if pe.ids.as_slice()[flat] == 0 {
                        pe.set(flat, id as u16, p);
                    }
                }
            }
        }
    }

    TensorTriple { od, sp, pe }
}
