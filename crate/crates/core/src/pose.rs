//! Pose containers and the scale-normalized 2.5D representation.

use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::skeleton::{Skeleton, INDEX_MCP, NUM_KEYPOINTS, ROOT};

pub type Point3 = [f64; 3];

/// 21 keypoints in the camera frame, in mm unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub points: [Point3; NUM_KEYPOINTS],
    pub valid: [bool; NUM_KEYPOINTS],
}

impl Pose3D {
    pub fn new(points: [Point3; NUM_KEYPOINTS]) -> Self {
        Pose3D {
            points,
            valid: [true; NUM_KEYPOINTS],
        }
    }

    pub fn scaled(&self, factor: f64) -> Pose3D {
        let mut out = self.clone();
        for v in out.points.iter_mut().flatten() {
            *v *= factor;
        }
        out
    }

    pub fn translated(&self, t: Point3) -> Pose3D {
        let mut out = self.clone();
        for p in out.points.iter_mut() {
            for (v, d) in p.iter_mut().zip(t) {
                *v += d;
            }
        }
        out
    }

    pub fn depths(&self) -> [f64; NUM_KEYPOINTS] {
        self.points.map(|p| p[2])
    }
}

/// 21 keypoints in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub points: [[f64; 2]; NUM_KEYPOINTS],
    pub valid: [bool; NUM_KEYPOINTS],
}

impl Pose2D {
    pub fn new(points: [[f64; 2]; NUM_KEYPOINTS]) -> Self {
        Pose2D {
            points,
            valid: [true; NUM_KEYPOINTS],
        }
    }
}

/// Per keypoint `(x px, y px, Ẑʳ)`: pixel location plus scale-normalized depth
/// relative to the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose25D {
    pub points: [[f64; 3]; NUM_KEYPOINTS],
    pub root: usize,
    pub valid: [bool; NUM_KEYPOINTS],
}

impl Pose25D {
    pub fn new(points: [[f64; 3]; NUM_KEYPOINTS]) -> Self {
        Pose25D {
            points,
            root: ROOT,
            valid: [true; NUM_KEYPOINTS],
        }
    }

    pub fn pixels(&self) -> Pose2D {
        Pose2D {
            points: self.points.map(|p| [p[0], p[1]]),
            valid: self.valid,
        }
    }

    pub fn relative_depths(&self) -> [f64; NUM_KEYPOINTS] {
        self.points.map(|p| p[2])
    }
}

/// A 3D pose in units where the normalization bone has length `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPose3D {
    pub pose: Pose3D,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    /// Target length of the normalization bone.
    pub c: f64,
    /// `(n, parent(n))`.
    pub pair: (usize, usize),
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            c: 1.0,
            pair: (INDEX_MCP, ROOT),
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self, skel: &Skeleton) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        let (n, m) = self.pair;
        if n >= NUM_KEYPOINTS || m >= NUM_KEYPOINTS || skel.bone_between(n, m).is_none() {
            return Err(Error::NotABone(n, m));
        }
        Ok(())
    }
}

/// `s = ‖P_n − P_m‖` in the pose's units.
pub fn normalization_scale(pose: &Pose3D, cfg: &NormalizationConfig) -> Result<f64> {
    let (n, m) = cfg.pair;
    let (a, b) = (pose.points[n], pose.points[m]);
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let s = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !s.is_finite() {
        return Err(Error::NonFinite("normalization pair"));
    }
    if s < 1e-9 {
        return Err(Error::ZeroBone(n, m));
    }
    Ok(s)
}

/// Scales the pose by `C / s` so the normalization bone has length `C`.
pub fn normalize_pose(pose: &Pose3D, cfg: &NormalizationConfig) -> Result<(NormalizedPose3D, f64)> {
    let s = normalization_scale(pose, cfg)?;
    let normalized = NormalizedPose3D {
        pose: pose.scaled(cfg.c / s),
        c: cfg.c,
    };
    Ok((normalized, s))
}

pub fn to_25d(pose: &Pose3D, k: &CameraIntrinsics, cfg: &NormalizationConfig) -> Result<Pose25D> {
    let (pixels, depths) = project(pose, k)?;
    let s = normalization_scale(pose, cfg)?;
    let ratio = cfg.c / s;
    let root = ROOT;
    let zroot = ratio * depths[root];
    let mut out = Pose25D::new([[0.0; 3]; NUM_KEYPOINTS]);
    out.valid = pose.valid;
    out.root = root;
    for i in 0..NUM_KEYPOINTS {
        let zr = if i == root {
            0.0
        } else {
            ratio * depths[i] - zroot
        };
        out.points[i] = [pixels.points[i][0], pixels.points[i][1], zr];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::canonical_skeleton;

    fn sample_pose() -> Pose3D {
        let mut pts = [[0.0; 3]; NUM_KEYPOINTS];
        for (k, p) in pts.iter_mut().enumerate() {
            let t = k as f64;
            *p = [
                20.0 * (0.7 * t).sin(),
                15.0 * (0.4 * t).cos() - t,
                500.0 + 4.0 * t,
            ];
        }
        Pose3D::new(pts)
    }

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 210.0, 63.5, 60.0).unwrap()
    }

    #[test]
    fn scale_examples() {
        let cfg = NormalizationConfig::default();
        let mut p = sample_pose();
        p.points[INDEX_MCP] = [p.points[0][0], p.points[0][1] + 30.0, p.points[0][2] + 40.0];
        assert!((normalization_scale(&p, &cfg).unwrap() - 50.0).abs() < 1e-12);
        let s = normalization_scale(&p.scaled(2.5), &cfg).unwrap();
        assert!((s - 125.0).abs() < 1e-9);
        p.points[INDEX_MCP] = p.points[0];
        assert_eq!(
            normalization_scale(&p, &cfg),
            Err(Error::ZeroBone(INDEX_MCP, 0))
        );
    }

    #[test]
    fn normalize_examples() {
        let cfg = NormalizationConfig::default();
        let mut p = sample_pose();
        p.points[INDEX_MCP] = [p.points[0][0] + 1.0, p.points[0][1], p.points[0][2]];
        let (q, s) = normalize_pose(&p, &cfg).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(q.pose, p);

        p.points[INDEX_MCP] = [p.points[0][0] + 2.0, p.points[0][1], p.points[0][2]];
        let (q, _) = normalize_pose(&p, &cfg).unwrap();
        for (a, b) in q
            .pose
            .points
            .iter()
            .flatten()
            .zip(p.points.iter().flatten())
        {
            assert_eq!(*a, b * 0.5);
        }

        let p = sample_pose();
        let (q, _) = normalize_pose(&p, &cfg).unwrap();
        let len = normalization_scale(&q.pose, &cfg).unwrap();
        assert!((len - 1.0).abs() < 1e-12);
        let (a, _) = project(&p, &cam()).unwrap();
        let (b, _) = project(&q.pose, &cam()).unwrap();
        for (u, v) in a.points.iter().flatten().zip(b.points.iter().flatten()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn to_25d_examples() {
        let cfg = NormalizationConfig::default();
        let p = sample_pose();
        let a = to_25d(&p, &cam(), &cfg).unwrap();
        assert_eq!(a.points[ROOT][2], 0.0);
        let b = to_25d(&p.scaled(3.7), &cam(), &cfg).unwrap();
        for (u, v) in a.points.iter().flatten().zip(b.points.iter().flatten()) {
            assert!((u - v).abs() < 1e-9);
        }

        let mut flat = p.clone();
        for q in flat.points.iter_mut() {
            q[2] = 600.0;
        }
        let f = to_25d(&flat, &cam(), &cfg).unwrap();
        assert!(f.points.iter().all(|q| q[2] == 0.0));

        let mut behind = p.clone();
        behind.points[3][2] = -5.0;
        assert!(matches!(
            to_25d(&behind, &cam(), &cfg),
            Err(Error::BehindCamera { index: 3, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let s = canonical_skeleton();
        NormalizationConfig::default().validate(&s).unwrap();
        let cfg = NormalizationConfig {
            c: 1.0,
            pair: (0, INDEX_MCP),
        };
        cfg.validate(&s).unwrap();
        let cfg = NormalizationConfig {
            c: 1.0,
            pair: (4, 0),
        };
        assert_eq!(cfg.validate(&s), Err(Error::NotABone(4, 0)));
        let cfg = NormalizationConfig {
            c: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate(&s).is_err());
    }
}
