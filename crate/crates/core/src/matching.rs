//! Polar skeletons and shot selection.
//!
//! A pose is re-expressed as a chain rooted at the nose: every other joint
//! hangs off a predecessor at distance `r` and angle `θ`, where `θ` is
//! measured against the predecessor's own segment (against the horizon for
//! joints hanging off the nose). Pose distances compare `sin θ` joint by
//! joint, so limb lengths do not matter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::annotation::{Joint, JointId, Skeleton, JOINT_COUNT};
use crate::index::{Block, CompositionModel, FeatureRecord};
use crate::retrieval::{normalize_row, similarity, UspWeights};
use crate::{par, Error, Result};

/// Chain order: position `k` holds joint `J_k`.
pub const CHAIN: [JointId; JOINT_COUNT] = [
    JointId::Nose,
    JointId::Neck,
    JointId::RightEye,
    JointId::LeftEye,
    JointId::RightEar,
    JointId::LeftEar,
    JointId::RightShoulder,
    JointId::LeftShoulder,
    JointId::RightElbow,
    JointId::LeftElbow,
    JointId::RightWrist,
    JointId::LeftWrist,
    JointId::RightHip,
    JointId::LeftHip,
    JointId::RightKnee,
    JointId::LeftKnee,
    JointId::RightAnkle,
    JointId::LeftAnkle,
];

/// Chain position of each joint's predecessor; the nose has none.
pub fn predecessor(k: usize) -> Option<usize> {
    match k {
        0 => None,
        1..=3 => Some(0),
        6 | 7 | 12 | 13 => Some(1),
        _ => Some(k - 2),
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarLink {
    pub parent: usize,
    pub r: f64,
    /// Relative to the parent segment, in `(-π, π]`.
    pub theta: f64,
    pub score: f64,
}

/// Polar form of a skeleton. `links[k]` is `None` for the nose and for
/// joints that are absent or whose predecessor is unreachable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPose {
    pub root_score: f64,
    pub links: [Option<PolarLink>; JOINT_COUNT],
}

impl PolarPose {
    pub fn theta(&self, k: usize) -> Option<f64> {
        self.links[k].map(|l| l.theta)
    }

    pub fn present(&self) -> usize {
        self.links.iter().flatten().count()
    }
}

/// Absolute direction of the segment ending at chain position `k`.
fn segment_angle(k: usize, pos: &[Option<(f64, f64)>; JOINT_COUNT]) -> Option<f64> {
    match predecessor(k) {
        None => Some(0.0),
        Some(p) => {
            let (a, b) = (pos[p]?, pos[k]?);
            Some((b.1 - a.1).atan2(b.0 - a.0))
        }
    }
}

pub fn to_polar(skeleton: &Skeleton) -> Result<PolarPose> {
    let nose = skeleton.get(JointId::Nose).ok_or(Error::MissingRoot)?;
    skeleton.get(JointId::Neck).ok_or(Error::MissingRoot)?;
    let mut pos = [None; JOINT_COUNT];
    for (k, id) in CHAIN.iter().enumerate() {
        pos[k] = skeleton.get(*id).map(|j| (j.x - nose.x, j.y - nose.y));
    }
    // Drop joints cut off from the root by an absent predecessor.
    for k in 1..JOINT_COUNT {
        if pos[predecessor(k).unwrap()].is_none() {
            pos[k] = None;
        }
    }
    let mut links = [None; JOINT_COUNT];
    for k in 1..JOINT_COUNT {
        let (Some(p), Some(here)) = (predecessor(k), pos[k]) else { continue };
        let base = pos[p].unwrap();
        let (dx, dy) = (here.0 - base.0, here.1 - base.1);
        let parent_angle = segment_angle(p, &pos).unwrap();
        links[k] = Some(PolarLink {
            parent: p,
            r: dx.hypot(dy),
            theta: wrap_angle(dy.atan2(dx) - parent_angle),
            score: skeleton.get(CHAIN[k]).unwrap().score,
        });
    }
    Ok(PolarPose {
        root_score: nose.score,
        links,
    })
}

/// Re-expands the chain with the nose at the origin.
pub fn to_cartesian(pose: &PolarPose) -> Skeleton {
    let mut pos: [Option<(f64, f64)>; JOINT_COUNT] = [None; JOINT_COUNT];
    let mut abs_angle = [0.0; JOINT_COUNT];
    pos[0] = Some((0.0, 0.0));
    // Predecessors always precede their children in chain order.
    for k in 1..JOINT_COUNT {
        let Some(link) = pose.links[k] else { continue };
        let Some(base) = pos[link.parent] else { continue };
        let parent_angle = if link.parent == 0 { 0.0 } else { abs_angle[link.parent] };
        let a = parent_angle + link.theta;
        abs_angle[k] = a;
        pos[k] = Some((base.0 + link.r * a.cos(), base.1 + link.r * a.sin()));
    }
    let mut s = Skeleton::new();
    for k in 0..JOINT_COUNT {
        if let Some((x, y)) = pos[k] {
            let score = if k == 0 { pose.root_score } else { pose.links[k].unwrap().score };
            s.set(CHAIN[k], Joint { x, y, score });
        }
    }
    s
}

/// Allowed relative-angle ranges, checked only to produce warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// `(min, max)` radians per chain position; `None` means unconstrained.
    pub limits: [Option<(f64, f64)>; JOINT_COUNT],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitWarning {
    pub joint: JointId,
    pub theta: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits {
            limits: [None; JOINT_COUNT],
        }
    }
}

impl JointLimits {
    /// Parses lines of `joint_name min_degrees max_degrees`.
    pub fn parse(text: &str) -> Result<JointLimits> {
        let mut out = JointLimits::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::InvalidParameter(format!("joint limits line {}: {raw:?}", n + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, lo, hi] = fields.as_slice() else { return Err(bad()) };
            let id: JointId = serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| bad())?;
            let k = CHAIN.iter().position(|&c| c == id).ok_or_else(bad)?;
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.limits[k] = Some((lo.to_radians(), hi.to_radians()));
        }
        Ok(out)
    }

    pub fn check(&self, pose: &PolarPose) -> Vec<LimitWarning> {
        (0..JOINT_COUNT)
            .filter_map(|k| {
                let (min, max) = self.limits[k]?;
                let theta = pose.theta(k)?;
                (theta < min || theta > max).then_some(LimitWarning {
                    joint: CHAIN[k],
                    theta,
                    min,
                    max,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseDistance {
    pub value: f64,
    pub shared: usize,
    /// Joints present in only one of the poses.
    pub skipped: usize,
}

/// `(Σ_k |sin θ_a,k − sin θ_b,k|^q)^(1/q)` over joints 1..17 present in
/// both poses.
pub fn pose_distance(a: &PolarPose, b: &PolarPose, q: f64) -> Result<PoseDistance> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("norm order must be at least 1, got {q}")));
    }
    let mut total = 0.0;
    let (mut shared, mut skipped) = (0, 0);
    for k in 1..JOINT_COUNT {
        match (a.theta(k), b.theta(k)) {
            (Some(x), Some(y)) => {
                let d = (x.sin() - y.sin()).abs();
                total += if q == 1.0 { d } else { d.powf(q) };
                shared += 1;
            }
            (None, None) => {}
            _ => skipped += 1,
        }
    }
    if shared == 0 {
        return Err(Error::NoSharedJoints);
    }
    let value = if q == 1.0 { total } else { total.powf(1.0 / q) };
    Ok(PoseDistance { value, shared, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotChoice {
    pub index: usize,
    pub scores: Vec<f64>,
}

fn argmax_first(scores: &[f64]) -> usize {
    (0..scores.len()).fold(0, |best, i| if scores[i] > scores[best] { i } else { best })
}

/// Picks the taken shot maximizing `min d(shot, ignored) − min d(shot,
/// preferred)`; with no ignored poses the first term is 0. Earliest shot
/// wins ties.
pub fn pose_shot(taken: &[PolarPose], preferred: &[PolarPose], ignored: &[PolarPose], q: f64) -> Result<ShotChoice> {
    if taken.is_empty() {
        return Err(Error::EmptyTaken);
    }
    if preferred.is_empty() {
        return Err(Error::EmptyPreferred);
    }
    let min_to = |shot: &PolarPose, set: &[PolarPose]| -> Result<f64> {
        set.iter()
            .map(|p| pose_distance(shot, p, q).map(|d| d.value))
            .try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
    };
    let scores = par::map(taken, |shot| -> Result<f64> {
        let away = if ignored.is_empty() { 0.0 } else { min_to(shot, ignored)? };
        Ok(away - min_to(shot, preferred)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ShotChoice {
        index: argmax_first(&scores),
        scores,
    })
}

/// Picks the candidate with the largest summed weighted similarity to the
/// style images. Each block's similarities are normalized over the whole
/// style × candidate matrix before weighting. Earliest candidate wins ties.
pub fn favorite_shot(style: &CompositionModel, candidates: &[FeatureRecord], w: &UspWeights) -> Result<ShotChoice> {
    if style.is_empty() || candidates.is_empty() {
        return Err(Error::EmptySession);
    }
    let columns = par::map(candidates, |c| similarity(style, c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![0.0; candidates.len()];
    for b in Block::ALL {
        let weight = w.get(b);
        if weight == 0.0 {
            continue;
        }
        let flat: Vec<f64> = columns.iter().flat_map(|col| col[b.index()].iter().copied()).collect();
        let normalized = normalize_row(b, &flat);
        for (q, chunk) in normalized.chunks(style.len()).enumerate() {
            scores[q] += weight * chunk.iter().sum::<f64>();
        }
    }
    Ok(ShotChoice {
        index: argmax_first(&scores),
        scores,
    })
}

/// The user's style set and candidate shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSession {
    pub preferred: Vec<String>,
    pub ignored: Vec<String>,
    pub shots: Vec<FeatureRecord>,
    pub usp: UspWeights,
}

impl StyleSession {
    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.preferred.iter().find(|p| self.ignored.contains(p)) {
            return Err(Error::InvalidParameter(format!("{id:?} is both preferred and ignored")));
        }
        if self.preferred.is_empty() || self.shots.is_empty() {
            return Err(Error::EmptySession);
        }
        Ok(())
    }

    pub fn favorite(&self, model: &CompositionModel) -> Result<ShotChoice> {
        self.validate()?;
        favorite_shot(&model.subset(&self.preferred)?, &self.shots, &self.usp)
    }
}

/// One candidate shot in a [`ShotReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotScore {
    pub image_id: String,
    pub score: f64,
    /// Pose objective, when the shot has a usable skeleton and the style set
    /// has at least one.
    pub pose_score: Option<f64>,
}

/// Favorite shot of a batch, plus the pose-based pick when poses allow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotReport {
    pub favorite: String,
    pub favorite_index: usize,
    pub pose_favorite: Option<String>,
    pub shots: Vec<ShotScore>,
}

/// Scores candidate shots against a style set drawn from `model`.
///
/// `skeleton_of` looks up the dominant skeleton of a style image. Shots and
/// style images without a chain root are left out of the pose comparison.
pub fn evaluate_shots(
    model: &CompositionModel,
    preferred: &[String],
    ignored: &[String],
    shots: &[(FeatureRecord, Option<Skeleton>)],
    skeleton_of: impl Fn(&str) -> Option<Skeleton>,
    w: &UspWeights,
    q: f64,
) -> Result<ShotReport> {
    let session = StyleSession {
        preferred: preferred.to_vec(),
        ignored: ignored.to_vec(),
        shots: shots.iter().map(|(r, _)| r.clone()).collect(),
        usp: *w,
    };
    let choice = session.favorite(model)?;

    let polar = |ids: &[String]| -> Vec<PolarPose> {
        ids.iter().filter_map(|id| skeleton_of(id)).filter_map(|s| to_polar(&s).ok()).collect()
    };
    let (pref_poses, ign_poses) = (polar(preferred), polar(ignored));
    let taken: Vec<(usize, PolarPose)> = shots
        .iter()
        .enumerate()
        .filter_map(|(i, (_, s))| s.as_ref().and_then(|s| to_polar(s).ok()).map(|p| (i, p)))
        .collect();
    let mut pose_scores = vec![None; shots.len()];
    let mut pose_favorite = None;
    if !taken.is_empty() && !pref_poses.is_empty() {
        let poses: Vec<PolarPose> = taken.iter().map(|(_, p)| p.clone()).collect();
        let pick = pose_shot(&poses, &pref_poses, &ign_poses, q)?;
        for ((i, _), s) in taken.iter().zip(&pick.scores) {
            pose_scores[*i] = Some(*s);
        }
        pose_favorite = Some(shots[taken[pick.index].0].0.image_id.clone());
    }
    Ok(ShotReport {
        favorite: shots[choice.index].0.image_id.clone(),
        favorite_index: choice.index,
        pose_favorite,
        shots: shots
            .iter()
            .zip(choice.scores)
            .zip(pose_scores)
            .map(|(((r, _), score), pose_score)| ShotScore {
                image_id: r.image_id.clone(),
                score,
                pose_score,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_skeleton(seed: f64) -> Skeleton {
        let mut pts = [(0.0, 0.0); JOINT_COUNT];
        for (i, p) in pts.iter_mut().enumerate() {
            let t = seed + i as f64;
            *p = (50.0 + 30.0 * (t * 1.7).sin(), 80.0 + 40.0 * (t * 0.9).cos());
        }
        Skeleton::from_points(&pts)
    }

    #[test]
    fn chain_parents_precede_children() {
        for k in 1..JOINT_COUNT {
            assert!(predecessor(k).unwrap() < k);
        }
        assert_eq!(predecessor(4), Some(2));
        assert_eq!(predecessor(12), Some(1));
        assert_eq!(predecessor(17), Some(15));
    }

    #[test]
    fn round_trip() {
        let s = full_skeleton(0.3);
        let polar = to_polar(&s).unwrap();
        let back = to_cartesian(&polar);
        let nose = s.get(JointId::Nose).unwrap();
        assert_eq!(back.get(JointId::Nose).unwrap().x, 0.0);
        for id in JointId::ALL {
            let (a, b) = (s.get(id).unwrap(), back.get(id).unwrap());
            assert!((a.x - nose.x - b.x).abs() < 1e-9 && (a.y - nose.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_root() {
        let mut s = full_skeleton(1.0);
        s.joints[JointId::Neck.slot()] = None;
        assert!(matches!(to_polar(&s), Err(Error::MissingRoot)));
    }

    #[test]
    fn absent_parent_cuts_the_branch() {
        let mut s = full_skeleton(2.0);
        s.joints[JointId::RightElbow.slot()] = None;
        let p = to_polar(&s).unwrap();
        assert!(p.links[8].is_none());
        assert!(p.links[10].is_none(), "wrist hangs off the missing elbow");
        assert_eq!(p.present(), 15);
    }

    #[test]
    fn distance_examples() {
        let mut a = PolarPose {
            root_score: 1.0,
            links: [None; JOINT_COUNT],
        };
        a.links[1] = Some(PolarLink {
            parent: 0,
            r: 1.0,
            theta: 0.0,
            score: 1.0,
        });
        let mut b = a.clone();
        b.links[1].as_mut().unwrap().theta = PI / 2.0;
        assert!((pose_distance(&a, &b, 1.0).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(pose_distance(&a, &a, 1.0).unwrap().value, 0.0);
        let empty = PolarPose {
            root_score: 1.0,
            links: [None; JOINT_COUNT],
        };
        assert!(matches!(pose_distance(&a, &empty, 1.0), Err(Error::NoSharedJoints)));
    }

    #[test]
    fn limits_warn() {
        let limits = JointLimits::parse("right_elbow -10 10\n# comment\n").unwrap();
        let p = to_polar(&full_skeleton(0.5)).unwrap();
        let warnings = limits.check(&p);
        let theta = p.theta(8).unwrap();
        assert_eq!(warnings.len(), usize::from(theta.abs() > 10f64.to_radians()));
        assert!(JointLimits::parse("elbow 1 2").is_err());
    }

    #[test]
    fn pose_shot_prefers_exact_match() {
        let poses: Vec<PolarPose> = (0..4).map(|i| to_polar(&full_skeleton(i as f64)).unwrap()).collect();
        let choice = pose_shot(&poses, &poses[2..3], &[], 1.0).unwrap();
        assert_eq!(choice.index, 2);
        assert!(matches!(pose_shot(&[], &poses, &[], 1.0), Err(Error::EmptyTaken)));
        assert!(matches!(pose_shot(&poses, &[], &[], 1.0), Err(Error::EmptyPreferred)));
    }

    #[test]
    fn evaluate_shots_reports_both_picks() {
        let mut model = CompositionModel::new();
        for id in ["a", "b"] {
            model.push(FeatureRecord::zeros(id)).unwrap();
        }
        let shots = vec![
            (FeatureRecord::zeros("s0"), None),
            (FeatureRecord::zeros("s1"), Some(full_skeleton(0.0))),
        ];
        let w = UspWeights::uniform();
        let report = evaluate_shots(&model, &["a".into()], &[], &shots, |_| Some(full_skeleton(0.0)), &w, 1.0).unwrap();
        // All records are identical, so the earliest shot wins.
        assert_eq!(report.favorite, "s0");
        assert_eq!(report.pose_favorite.as_deref(), Some("s1"));
        assert_eq!(report.shots[0].pose_score, None);
        assert_eq!(report.shots[1].pose_score, Some(0.0));

        let none = evaluate_shots(&model, &["a".into()], &[], &shots[..1], |_| None, &w, 1.0).unwrap();
        assert_eq!(none.pose_favorite, None);
        assert!(evaluate_shots(&model, &["a".into()], &["a".into()], &shots, |_| None, &w, 1.0).is_err());
    }
}
