//! Scale-invariant pose features and pose clustering.
//!
//! A body is described by its joint-to-line distances (J2L) and its skeleton
//! context (SC). J2L holds, for every joint `l` and every other unordered pair
//! `{m, n}`, the height of triangle `l m n` over base `m n`, divided by the
//! largest such height on the body. Entries are ordered by `l`, then by
//! `(m, n)` with `m < n` lexicographically, skipping pairs that contain `l`.
//! SC row `r` is the normalized histogram, over 18 bins of 20°, of the
//! directions from joint `r` to every other present joint.

mod kmeans;

use crate::annotation::{AnnotationBundle, Skeleton, JOINT_COUNT};
use crate::{Error, Result};

pub use kmeans::{
    elbow_scan, fuzzy_membership, kmeans, ClusterMember, ClusterReport, ElbowScan, KMeansConfig, PoseClusters,
};

/// `18 · C(17, 2)`.
pub const J2L_DIM: usize = JOINT_COUNT * (JOINT_COUNT - 1) * (JOINT_COUNT - 2) / 2;
pub const SC_BINS: usize = 18;
pub const SC_DIM: usize = JOINT_COUNT * SC_BINS;
pub const POSE_DIM: usize = J2L_DIM + SC_DIM;
/// Bases shorter than this (pixels) give a zero J2L entry.
pub const J2L_EPSILON: f64 = 1e-9;
/// Default cluster count for corpus indexing.
pub const DEFAULT_CLUSTERS: usize = 15;

const MIN_JOINTS: usize = 3;

fn points(skeleton: &Skeleton) -> Result<[Option<(f64, f64)>; JOINT_COUNT]> {
    let present = skeleton.present_count();
    if present < MIN_JOINTS {
        return Err(Error::TooFewJoints(present));
    }
    Ok(skeleton.joints.map(|j| j.map(|j| (j.x, j.y))))
}

pub fn j2l_features(skeleton: &Skeleton) -> Result<Vec<f64>> {
    let p = points(skeleton)?;
    let mut out = Vec::with_capacity(J2L_DIM);
    for l in 0..JOINT_COUNT {
        for m in 0..JOINT_COUNT {
            for n in m + 1..JOINT_COUNT {
                if m == l || n == l {
                    continue;
                }
                let v = match (p[l], p[m], p[n]) {
                    (Some(a), Some(b), Some(c)) => {
                        let base = (c.0 - b.0).hypot(c.1 - b.1);
                        if base < J2L_EPSILON {
                            0.0
                        } else {
                            // Twice the triangle area over the base.
                            ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs() / base
                        }
                    }
                    _ => 0.0,
                };
                out.push(v);
            }
        }
    }
    let max = out.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    Ok(out)
}

/// Angular bin of direction `(dx, dy)`; directions within 1e-9 of a bin
/// edge snap onto it so rotations by whole bins shift rows exactly.
fn angle_bin(dx: f64, dy: f64) -> usize {
    let width = std::f64::consts::TAU / SC_BINS as f64;
    let t = dy.atan2(dx).rem_euclid(std::f64::consts::TAU) / width;
    let nearest = t.round();
    let t = if (t - nearest).abs() < 1e-9 { nearest } else { t.floor() };
    t as usize % SC_BINS
}

/// Row-major 18 × 18 skeleton context.
pub fn skeleton_context(skeleton: &Skeleton) -> Result<Vec<f64>> {
    let p = points(skeleton)?;
    let mut out = vec![0.0; SC_DIM];
    for r in 0..JOINT_COUNT {
        let Some(origin) = p[r] else { continue };
        let row = &mut out[r * SC_BINS..(r + 1) * SC_BINS];
        let mut total = 0usize;
        for (s, q) in p.iter().enumerate() {
            if let (true, Some(q)) = (s != r, q) {
                row[angle_bin(q.0 - origin.0, q.1 - origin.1)] += 1.0;
                total += 1;
            }
        }
        if total > 0 {
            row.iter_mut().for_each(|v| *v /= total as f64);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFeatures {
    pub j2l: Vec<f64>,
    pub sc: Vec<f64>,
}

impl PoseFeatures {
    pub fn extract(skeleton: &Skeleton) -> Result<PoseFeatures> {
        Ok(PoseFeatures {
            j2l: j2l_features(skeleton)?,
            sc: skeleton_context(skeleton)?,
        })
    }

    /// `j2l ⧺ sc`, 2772 values.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(POSE_DIM);
        v.extend_from_slice(&self.j2l);
        v.extend_from_slice(&self.sc);
        v
    }

    /// Unit-length `concat()`; all zeros stay zero.
    pub fn normalized(&self) -> Vec<f64> {
        let mut v = self.concat();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Normalized pose vector of one body.
pub fn pose_vector(skeleton: &Skeleton) -> Result<Vec<f64>> {
    PoseFeatures::extract(skeleton).map(|f| f.normalized())
}

/// Pose vector of the image's highest-scoring person, if it has one.
pub fn image_pose(bundle: &AnnotationBundle) -> Option<Vec<f64>> {
    bundle.dominant_person().and_then(|s| pose_vector(s).ok())
}
