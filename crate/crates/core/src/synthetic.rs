//! Seeded generators for bundles, records, models and poses. Used by the
//! test suites, the benches and `captain synth`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotation::{
    AnnotationBundle, BoundingBox, Category, Gender, Joint, LabelMap, ObjectDetection, Skeleton, JOINT_COUNT,
    MERGED_CLASSES, OD_CLASSES, SP_CLASSES, VGG_DIM,
};
use crate::arpose::POSE_DIM;
use crate::index::{CompositionModel, FeatureRecord};
use crate::matching::{to_cartesian, PolarLink, PolarPose};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-length vector with Gaussian direction.
pub fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Non-negative unit-length descriptor, like pooled activations.
pub fn descriptor<R: Rng>(rng: &mut R) -> Vec<f32> {
    let mut v: Vec<f64> = unit_vector(rng, VGG_DIM).into_iter().map(f64::abs).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v.into_iter().map(|x| x as f32).collect()
}

/// Nominal segment lengths per chain position, in head-size units.
const LIMB_LENGTH: [f64; JOINT_COUNT] = [
    0.0, 1.0, 0.25, 0.25, 0.3, 0.3, 0.8, 0.8, 1.2, 1.2, 1.1, 1.1, 2.6, 2.6, 1.8, 1.8, 1.7, 1.7,
];

/// Relative chain angles of an upright, arms-down pose.
pub fn standing_angles() -> [f64; JOINT_COUNT] {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let mut a = [0.0; JOINT_COUNT];
    a[1] = FRAC_PI_2; // neck below the nose (image y grows downwards)
    a[2] = -3.0 * FRAC_PI_4;
    a[3] = -FRAC_PI_4;
    a[4] = 0.5;
    a[5] = -0.5;
    a[6] = FRAC_PI_2;
    a[7] = -FRAC_PI_2;
    a[8] = -FRAC_PI_2;
    a[9] = FRAC_PI_2;
    a[12] = 0.2;
    a[13] = -0.2;
    a[14] = -0.2;
    a[15] = 0.2;
    a
}

/// Skeleton from relative chain angles, with the nose at `origin` and
/// segments scaled by `scale`.
pub fn pose_from_angles(angles: &[f64; JOINT_COUNT], scale: f64, origin: (f64, f64)) -> Skeleton {
    let mut pose = PolarPose {
        root_score: 0.9,
        links: [None; JOINT_COUNT],
    };
    for k in 1..JOINT_COUNT {
        pose.links[k] = Some(PolarLink {
            parent: crate::matching::predecessor(k).expect("non-root"),
            r: LIMB_LENGTH[k] * scale,
            theta: angles[k],
            score: 0.9,
        });
    }
    to_cartesian(&pose).map_points(|x, y| (x + origin.0, y + origin.1))
}

/// `count` prototypes drawn uniformly over all relative angles.
pub fn pose_prototypes<R: Rng>(rng: &mut R, count: usize) -> Vec<[f64; JOINT_COUNT]> {
    (0..count)
        .map(|_| {
            let mut a = [0.0; JOINT_COUNT];
            for v in a.iter_mut().skip(1) {
                *v = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            }
            a
        })
        .collect()
}

/// Adds uniform jitter of up to `degrees` to every relative angle.
pub fn jitter_angles<R: Rng>(rng: &mut R, angles: &[f64; JOINT_COUNT], degrees: f64) -> [f64; JOINT_COUNT] {
    let d = degrees.to_radians();
    let mut out = *angles;
    for v in out.iter_mut().skip(1) {
        *v += rng.random_range(-d..=d);
    }
    out
}

/// Skeleton with random joint positions inside a `width × height` frame,
/// a random subset of joints (at least `min_present`) present.
pub fn random_skeleton<R: Rng>(rng: &mut R, width: f64, height: f64, min_present: usize) -> Skeleton {
    let mut s = Skeleton::new();
    let mut slots: Vec<usize> = (0..JOINT_COUNT).collect();
    slots.shuffle(rng);
    let present = rng.random_range(min_present.min(JOINT_COUNT)..=JOINT_COUNT);
    for &slot in &slots[..present] {
        s.joints[slot] = Some(Joint {
            x: rng.random_range(0.0..width),
            y: rng.random_range(0.0..height),
            score: rng.random_range(0.05..0.99),
        });
    }
    s
}

/// Knobs for [`random_bundle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleSpec {
    pub width: usize,
    pub height: usize,
    pub max_objects: usize,
    pub max_persons: usize,
    pub scene: bool,
    pub saliency: bool,
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec {
            width: 64,
            height: 48,
            max_objects: 4,
            max_persons: 2,
            scene: true,
            saliency: true,
        }
    }
}

fn random_box<R: Rng>(rng: &mut R, width: usize, height: usize) -> BoundingBox {
    let (w, h) = (width as f64, height as f64);
    let x0 = rng.random_range(0.0..w * 0.8);
    let y0 = rng.random_range(0.0..h * 0.8);
    let x1 = rng.random_range(x0..w - 0.01);
    let y1 = rng.random_range(y0..h - 0.01);
    BoundingBox::from([x0, y0, x1, y1])
}

/// A valid bundle with random detections. People come as an upright pose
/// plus a matching person box.
pub fn random_bundle<R: Rng>(rng: &mut R, image_id: &str, spec: &BundleSpec) -> AnnotationBundle {
    let (w, h) = (spec.width, spec.height);
    let mut b = AnnotationBundle::empty(image_id, w, h);
    b.vgg = descriptor(rng);
    b.rating = (rng.random_range(0.0..100.0f64) * 10.0).round() / 10.0;
    b.views = rng.random_range(0..100_000);
    b.gender = [Gender::Male, Gender::Female, Gender::Unknown][rng.random_range(0..3)];
    b.tags = vec!["synthetic".into()];

    for _ in 0..rng.random_range(0..=spec.max_objects) {
        b.objects.push(ObjectDetection {
            class_id: rng.random_range(2..=OD_CLASSES),
            probability: rng.random_range(0.0..0.99),
            bbox: random_box(rng, w, h),
        });
    }
    let persons = rng.random_range(0..=spec.max_persons);
    for _ in 0..persons {
        let scale = rng.random_range(0.04..0.09) * h as f64;
        let origin = (rng.random_range(0.3..0.7) * w as f64, rng.random_range(0.05..0.2) * h as f64);
        let mut angles = jitter_angles(rng, &standing_angles(), 25.0);
        angles[1] = std::f64::consts::FRAC_PI_2 + rng.random_range(-0.2..0.2);
        let mut s = pose_from_angles(&angles, scale, origin);
        for j in s.joints.iter_mut() {
            let keep = rng.random_bool(0.85);
            match j {
                Some(joint) if keep => {
                    joint.x = joint.x.clamp(0.0, w as f64 - 1.0);
                    joint.y = joint.y.clamp(0.0, h as f64 - 1.0);
                    joint.score = rng.random_range(0.3..0.99);
                }
                _ => *j = None,
            }
        }
        if let Some((x0, y0, x1, y1)) = s.extent() {
            b.objects.push(ObjectDetection {
                class_id: 1,
                probability: rng.random_range(0.3..0.99),
                bbox: BoundingBox::from([x0, y0, x1, y1]),
            });
        }
        b.persons.push(s);
    }
    if persons > 0 {
        b.category = Some(Category::ALL[rng.random_range(0..Category::COUNT)]);
    }

    if spec.scene {
        let n = w * h;
        let regions: Vec<u16> = (0..3).map(|_| rng.random_range(1..=SP_CLASSES)).collect();
        let probs: Vec<f32> = (0..3).map(|_| rng.random_range(0.0..0.99)).collect();
        let mut ids = Vec::with_capacity(n);
        let mut ps = Vec::with_capacity(n);
        for row in 0..h {
            for _ in 0..w {
                let r = (row * 3 / h.max(1)).min(2);
                ids.push(regions[r]);
                ps.push(probs[r]);
            }
        }
        b.scene = Some(LabelMap { ids, probabilities: ps });
    }
    if spec.saliency {
        let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let sigma = 0.3 * w.max(h) as f64;
        let map = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| {
                let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
                (-d2 / (2.0 * sigma * sigma)).exp() as f32
            })
            .collect();
        b.saliency = Some(map);
    }
    b
}

pub fn random_corpus(seed: u64, n: usize, spec: &BundleSpec) -> Vec<AnnotationBundle> {
    let mut rng = rng(seed);
    (0..n).map(|i| random_bundle(&mut rng, &format!("img{i:05}"), spec)).collect()
}

/// A record satisfying every block invariant, without going through
/// decomposition.
pub fn random_record<R: Rng>(rng: &mut R, image_id: &str) -> FeatureRecord {
    let mut r = FeatureRecord::zeros(image_id);
    r.vgg = descriptor(rng);
    if rng.random_bool(0.9) {
        let classes: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..MERGED_CLASSES)).collect();
        let weights: Vec<f64> = classes.iter().map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut iod = vec![0.0f64; MERGED_CLASSES];
        for (c, w) in classes.iter().zip(&weights) {
            iod[*c] += w / total;
        }
        r.iod = iod.into_iter().map(|v| v as f32).collect();
    }
    if rng.random_bool(0.8) {
        r.cade[rng.random_range(0..Category::COUNT)] = 1.0;
    }
    if rng.random_bool(0.8) {
        let v: Vec<f64> = unit_vector(rng, POSE_DIM).into_iter().map(f64::abs).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.arpose = v.into_iter().map(|x| (x / norm) as f32).collect();
    }
    r.stat = vec![rng.random_range(0.0..100.0f32), rng.random_range(0..100_000) as f32];
    r.gender = vec![0.0; 3];
    r.gender[rng.random_range(0..3)] = 1.0;
    r
}

pub fn random_model(seed: u64, n: usize) -> CompositionModel {
    let mut rng = rng(seed);
    CompositionModel::from_records((0..n).map(|i| random_record(&mut rng, &format!("img{i:05}"))))
        .expect("generated ids are unique")
}

/// `classes` Gaussian blobs in `dim` dimensions with unit spread, centers
/// drawn at distance `separation` scale. Returns `(x, class)`.
pub fn gaussian_blobs<R: Rng>(
    rng: &mut R,
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
) -> Vec<(Vec<f64>, usize)> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| unit_vector(rng, dim).into_iter().map(|v| v * separation).collect())
        .collect();
    let mut out = Vec::with_capacity(classes * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            out.push((center.iter().map(|m| m + normal.sample(rng)).collect(), c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_bundles_validate() {
        for b in random_corpus(3, 20, &BundleSpec::default()) {
            b.validate().unwrap();
        }
    }

    #[test]
    fn generated_records_are_well_formed() {
        let m = random_model(1, 30);
        assert_eq!(m.len(), 30);
        for i in 0..m.len() {
            let r = m.record(i);
            r.check_dims().unwrap();
            let s: f32 = r.iod.iter().sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn standing_pose_is_upright() {
        let s = pose_from_angles(&standing_angles(), 10.0, (50.0, 10.0));
        let nose = s.get(crate::annotation::JointId::Nose).unwrap();
        let ankle = s.get(crate::annotation::JointId::LeftAnkle).unwrap();
        assert!(ankle.y > nose.y + 50.0);
    }
}
