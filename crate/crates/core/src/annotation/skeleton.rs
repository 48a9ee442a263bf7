use serde::{Deserialize, Serialize};

/// Number of body joints reported by the pose estimator.
pub const JOINT_COUNT: usize = 18;

/// Joint identifiers in pose-estimator order; `id()` is the 1-based id used
/// in bundles and in the pose tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    Nose,
    Neck,
    RightShoulder,
    RightElbow,
    RightWrist,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    RightHip,
    RightKnee,
    RightAnkle,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
}

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::Nose,
        JointId::Neck,
        JointId::RightShoulder,
        JointId::RightElbow,
        JointId::RightWrist,
        JointId::LeftShoulder,
        JointId::LeftElbow,
        JointId::LeftWrist,
        JointId::RightHip,
        JointId::RightKnee,
        JointId::RightAnkle,
        JointId::LeftHip,
        JointId::LeftKnee,
        JointId::LeftAnkle,
        JointId::LeftEye,
        JointId::RightEye,
        JointId::LeftEar,
        JointId::RightEar,
    ];

    /// 1-based id.
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    /// Zero-based slot in a [`Skeleton`].
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<JointId> {
        (1..=JOINT_COUNT as u8)
            .contains(&id)
            .then(|| JointId::ALL[id as usize - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// One detected person: 18 joint slots, absent joints are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: [Option<Joint>; JOINT_COUNT],
}

impl Skeleton {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a fully-present skeleton with unit scores from `(x, y)` pairs in
    /// [`JointId::ALL`] order.
    pub fn from_points(points: &[(f64, f64); JOINT_COUNT]) -> Self {
        let mut s = Skeleton::new();
        for (slot, &(x, y)) in points.iter().enumerate() {
            s.joints[slot] = Some(Joint { x, y, score: 1.0 });
        }
        s
    }

    pub fn get(&self, id: JointId) -> Option<&Joint> {
        self.joints[id.slot()].as_ref()
    }

    pub fn set(&mut self, id: JointId, joint: Joint) {
        self.joints[id.slot()] = Some(joint);
    }

    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    /// Mean score over present joints, 0 when none are present.
    pub fn mean_score(&self) -> f64 {
        let (sum, n) = self
            .joints
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), j| (s + j.score, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Axis-aligned extent `(x_min, y_min, x_max, y_max)` of the present joints.
    pub fn extent(&self) -> Option<(f64, f64, f64, f64)> {
        self.joints.iter().flatten().fold(None, |acc, j| {
            Some(match acc {
                None => (j.x, j.y, j.x, j.y),
                Some((x0, y0, x1, y1)) => (x0.min(j.x), y0.min(j.y), x1.max(j.x), y1.max(j.y)),
            })
        })
    }

    /// Applies `f` to every present joint position.
    pub fn map_points(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Skeleton {
        let mut out = self.clone();
        for joint in out.joints.iter_mut().flatten() {
            let (x, y) = f(joint.x, joint.y);
            joint.x = x;
            joint.y = y;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for j in JointId::ALL {
            assert_eq!(JointId::from_id(j.id()), Some(j));
        }
        assert_eq!(JointId::Nose.id(), 1);
        assert_eq!(JointId::RightEar.id(), 18);
        assert_eq!(JointId::from_id(0), None);
        assert_eq!(JointId::from_id(19), None);
    }

    #[test]
    fn extent_and_mean() {
        let mut s = Skeleton::new();
        assert!(s.extent().is_none());
        assert_eq!(s.mean_score(), 0.0);
        s.set(JointId::Nose, Joint { x: 1.0, y: 5.0, score: 0.5 });
        s.set(JointId::Neck, Joint { x: 3.0, y: 2.0, score: 0.7 });
        assert_eq!(s.extent(), Some((1.0, 2.0, 3.0, 5.0)));
        assert!((s.mean_score() - 0.6).abs() < 1e-15);
    }
}
