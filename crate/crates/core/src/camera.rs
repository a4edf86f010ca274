//! Pinhole projection and the crop transform into network input coordinates.
//!
//! Pixel (0, 0) is the center of the top-left pixel and coordinates are
//! continuous throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Point3, Pose2D, Pose3D};
use crate::skeleton::NUM_KEYPOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.skew];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::BadIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Maps a pixel through K⁻¹ to normalized image coordinates (X/Z, Y/Z).
    pub fn pixel_to_normalized(&self, p: [f64; 2]) -> [f64; 2] {
        let yn = (p[1] - self.cy) / self.fy;
        let xn = (p[0] - self.cx - self.skew * yn) / self.fx;
        [xn, yn]
    }

    pub fn normalized_to_pixel(&self, n: [f64; 2]) -> [f64; 2] {
        [
            self.fx * n[0] + self.skew * n[1] + self.cx,
            self.fy * n[1] + self.cy,
        ]
    }

    pub fn project_point(&self, p: &Point3) -> [f64; 2] {
        self.normalized_to_pixel([p[0] / p[2], p[1] / p[2]])
    }

    pub fn backproject_point(&self, p: [f64; 2], z: f64) -> Point3 {
        let n = self.pixel_to_normalized(p);
        [n[0] * z, n[1] * z, z]
    }
}

/// Projects every keypoint, returning the 2D pose and the per-keypoint depths.
/// Only valid keypoints must lie in front of the camera; invalid ones that do
/// not are emitted at (0, 0).
pub fn project(pose: &Pose3D, k: &CameraIntrinsics) -> Result<(Pose2D, [f64; NUM_KEYPOINTS])> {
    let mut out = Pose2D::new([[0.0; 2]; NUM_KEYPOINTS]);
    out.valid = pose.valid;
    let mut depths = [0.0; NUM_KEYPOINTS];
    for (i, p) in pose.points.iter().enumerate() {
        depths[i] = p[2];
        if p[2] > 0.0 {
            out.points[i] = k.project_point(p);
        } else if pose.valid[i] {
            return Err(Error::BehindCamera { index: i, z: p[2] });
        }
    }
    Ok((out, depths))
}

/// Exact right inverse of [`project`] on positive depths.
pub fn backproject(
    p: &Pose2D,
    depths: &[f64; NUM_KEYPOINTS],
    k: &CameraIntrinsics,
) -> Result<Pose3D> {
    let mut out = Pose3D::new([[0.0; 3]; NUM_KEYPOINTS]);
    out.valid = p.valid;
    for i in 0..NUM_KEYPOINTS {
        let z = depths[i];
        if !(z > 0.0) {
            return Err(Error::BadDepth { index: i, z });
        }
        out.points[i] = k.backproject_point(p.points[i], z);
    }
    Ok(out)
}

/// A 2×3 affine map `[A | t]` acting on pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap2D {
    pub m: [[f64; 3]; 2],
}

impl AffineMap2D {
    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        let a = AffineMap2D { m };
        if !(a.det().abs() > 1e-12) || m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateBox(format!("singular affine map {m:?}")));
        }
        Ok(a)
    }

    pub fn identity() -> Self {
        AffineMap2D {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.m;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn invert(&self) -> AffineMap2D {
        let m = &self.m;
        let d = self.det();
        let a = [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]];
        let t = [
            -(a[0][0] * m[0][2] + a[0][1] * m[1][2]),
            -(a[1][0] * m[0][2] + a[1][1] * m[1][2]),
        ];
        AffineMap2D {
            m: [[a[0][0], a[0][1], t[0]], [a[1][0], a[1][1], t[1]]],
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineMap2D) -> AffineMap2D {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AffineMap2D { m }
    }

    pub fn apply_pose(&self, p: &Pose2D) -> Pose2D {
        let mut out = p.clone();
        for q in out.points.iter_mut() {
            *q = self.apply(*q);
        }
        out
    }

    pub fn invert_pose(&self, p: &Pose2D) -> Pose2D {
        self.invert().apply_pose(p)
    }
}

/// Similarity map from image pixels into a `(W, H)` crop. The bbox is grown to
/// a square whose side is `max(w, h) / fill_fraction`, centered on the bbox,
/// and that square is scaled uniformly onto `[0, W) × [0, H)` with its center
/// landing on `(W/2, H/2)`.
pub fn crop_transform(
    bbox: [f64; 4],
    out_size: (usize, usize),
    fill_fraction: f64,
) -> Result<AffineMap2D> {
    let [x0, y0, w, h] = bbox;
    if bbox.iter().any(|v| !v.is_finite()) || !(w > 0.0 && h > 0.0) {
        return Err(Error::DegenerateBox(format!("bbox {bbox:?}")));
    }
    if !(fill_fraction > 0.0 && fill_fraction <= 1.0) {
        return Err(Error::DegenerateBox(format!(
            "fill fraction {fill_fraction}"
        )));
    }
    let (ow, oh) = out_size;
    if ow == 0 || oh == 0 {
        return Err(Error::DegenerateBox("empty output size".into()));
    }
    let side = w.max(h) / fill_fraction;
    let scale = ow.min(oh) as f64 / side;
    let (bx, by) = (x0 + 0.5 * w, y0 + 0.5 * h);
    AffineMap2D::new([
        [scale, 0.0, 0.5 * ow as f64 - scale * bx],
        [0.0, scale, 0.5 * oh as f64 - scale * by],
    ])
}
