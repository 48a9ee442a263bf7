//! The 40 person features fed to the portrait classifier.
//!
//! | index | feature |
//! |-------|---------|
//! | 0, 1  | max person score, object detector / pose estimator |
//! | 2, 3  | max person area, object detector / pose estimator |
//! | 4     | intersected area of the top-scoring person of each detector |
//! | 5, 6  | scores of those top-scoring persons |
//! | 7, 8  | areas of those top-scoring persons |
//! | 9, 10 | persons above the HIGH person threshold, per detector |
//! | 11, 12| persons covering more than 5% of the image, per detector |
//! | 13    | max of 9, 10 |
//! | 14    | max of 11, 12 |
//! | 15    | max of 13, 14 |
//! | 16..40| limb scores of the dominant pose-estimator person |
//!
//! Scores are unified scores `-log2(1 - p)`; areas are fractions of the
//! image. Limbs are, in order: nose, neck, right shoulder, right elbow,
//! right wrist, right hand, left shoulder, left elbow, left wrist, left hand,
//! right hip, right knee, right ankle, right leg, left hip, left knee, left
//! ankle, left leg, right eye, left eye, eyes, right ear, left ear, ears. A
//! single joint contributes its probability; a composite limb contributes
//! the mean probability of its joints when all are present, else 0.

use serde::{Deserialize, Serialize};

use crate::annotation::{probability_score, AnnotationBundle, ClassMap, DetectorKind, JointId, Skeleton};
use crate::fusion::Thresholds;

pub const CADE_FEATURES: usize = 40;

/// Area fraction above which a person counts towards features 11 and 12.
const LARGE_PERSON_AREA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct CadeFeatures(pub [f64; CADE_FEATURES]);

impl From<CadeFeatures> for Vec<f64> {
    fn from(f: CadeFeatures) -> Vec<f64> {
        f.0.to_vec()
    }
}

impl TryFrom<Vec<f64>> for CadeFeatures {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, String> {
        let n = v.len();
        v.try_into()
            .map(CadeFeatures)
            .map_err(|_| format!("expected {CADE_FEATURES} features, got {n}"))
    }
}

impl CadeFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for CadeFeatures {
    fn default() -> Self {
        CadeFeatures([0.0; CADE_FEATURES])
    }
}

/// Rectangle in continuous pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    fn intersection(&self, o: &Rect) -> f64 {
        Rect {
            x0: self.x0.max(o.x0),
            y0: self.y0.max(o.y0),
            x1: self.x1.min(o.x1),
            y1: self.y1.min(o.y1),
        }
        .area()
    }
}

#[derive(Debug, Clone, Copy)]
struct PersonCandidate {
    probability: f64,
    area: f64,
    rect: Rect,
}

enum Limb {
    Joint(JointId),
    Composite(&'static [JointId]),
}

const LIMBS: [Limb; 24] = {
    use JointId::*;
    [
        Limb::Joint(Nose),
        Limb::Joint(Neck),
        Limb::Joint(RightShoulder),
        Limb::Joint(RightElbow),
        Limb::Joint(RightWrist),
        Limb::Composite(&[RightShoulder, RightElbow, RightWrist]),
        Limb::Joint(LeftShoulder),
        Limb::Joint(LeftElbow),
        Limb::Joint(LeftWrist),
        Limb::Composite(&[LeftShoulder, LeftElbow, LeftWrist]),
        Limb::Joint(RightHip),
        Limb::Joint(RightKnee),
        Limb::Joint(RightAnkle),
        Limb::Composite(&[RightHip, RightKnee, RightAnkle]),
        Limb::Joint(LeftHip),
        Limb::Joint(LeftKnee),
        Limb::Joint(LeftAnkle),
        Limb::Composite(&[LeftHip, LeftKnee, LeftAnkle]),
        Limb::Joint(RightEye),
        Limb::Joint(LeftEye),
        Limb::Composite(&[RightEye, LeftEye]),
        Limb::Joint(RightEar),
        Limb::Joint(LeftEar),
        Limb::Composite(&[RightEar, LeftEar]),
    ]
};

fn limb_score(person: &Skeleton, limb: &Limb) -> f64 {
    match limb {
        Limb::Joint(id) => person.get(*id).map_or(0.0, |j| j.score),
        Limb::Composite(ids) => {
            let scores: Option<Vec<f64>> = ids.iter().map(|id| person.get(*id).map(|j| j.score)).collect();
            scores.map_or(0.0, |s| s.iter().sum::<f64>() / s.len() as f64)
        }
    }
}

/// Highest probability first, earliest wins ties.
fn top(candidates: &[PersonCandidate]) -> Option<&PersonCandidate> {
    candidates
        .iter()
        .fold(None, |best: Option<&PersonCandidate>, c| match best {
            Some(b) if b.probability >= c.probability => Some(b),
            _ => Some(c),
        })
}

pub fn extract_cade_features(bundle: &AnnotationBundle, map: &ClassMap, thresholds: &Thresholds) -> CadeFeatures {
    let pixels = bundle.pixel_count() as f64;
    let mut f = [0.0; CADE_FEATURES];
    if pixels == 0.0 {
        return CadeFeatures(f);
    }

    let od: Vec<PersonCandidate> = bundle
        .objects
        .iter()
        .filter(|o| map.from_od(o.class_id) == Some(map.person()))
        .map(|o| {
            let ((c0, c1), (r0, r1)) = o.bbox.pixel_span();
            let rect = Rect {
                x0: c0 as f64,
                y0: r0 as f64,
                x1: c1 as f64 + 1.0,
                y1: r1 as f64 + 1.0,
            };
            PersonCandidate {
                probability: o.probability,
                area: rect.area() / pixels,
                rect,
            }
        })
        .collect();

    // Pose persons in bundle order; the dominant one matches
    // `AnnotationBundle::dominant_person`.
    let pe: Vec<PersonCandidate> = bundle
        .persons
        .iter()
        .filter_map(|s| {
            s.extent().map(|(x0, y0, x1, y1)| {
                let rect = Rect { x0, y0, x1, y1 };
                PersonCandidate {
                    probability: s.mean_score(),
                    area: (rect.area() / pixels).min(1.0),
                    rect,
                }
            })
        })
        .collect();

    let max_of = |c: &[PersonCandidate], key: fn(&PersonCandidate) -> f64| c.iter().map(key).fold(0.0, f64::max);
    f[0] = probability_score(max_of(&od, |c| c.probability));
    f[1] = probability_score(max_of(&pe, |c| c.probability));
    f[2] = max_of(&od, |c| c.area);
    f[3] = max_of(&pe, |c| c.area);

    let (top_od, top_pe) = (top(&od), top(&pe));
    if let (Some(a), Some(b)) = (top_od, top_pe) {
        f[4] = a.rect.intersection(&b.rect) / pixels;
    }
    if let Some(a) = top_od {
        f[5] = probability_score(a.probability);
        f[7] = a.area;
    }
    if let Some(b) = top_pe {
        f[6] = probability_score(b.probability);
        f[8] = b.area;
    }

    let person = map.person();
    let high_od = thresholds.band(person, DetectorKind::Od).high;
    let high_pe = thresholds.band(person, DetectorKind::Pe).high;
    let count = |c: &[PersonCandidate], pred: &dyn Fn(&PersonCandidate) -> bool| c.iter().filter(|x| pred(x)).count() as f64;
    f[9] = count(&od, &|c| c.probability > high_od);
    f[10] = count(&pe, &|c| c.probability > high_pe);
    f[11] = count(&od, &|c| c.area > LARGE_PERSON_AREA);
    f[12] = count(&pe, &|c| c.area > LARGE_PERSON_AREA);
    f[13] = f[9].max(f[10]);
    f[14] = f[11].max(f[12]);
    f[15] = f[13].max(f[14]);

    if let Some(dominant) = bundle.dominant_person() {
        for (slot, limb) in f[16..].iter_mut().zip(LIMBS.iter()) {
            *slot = limb_score(dominant, limb);
        }
    }
    CadeFeatures(f)
}
