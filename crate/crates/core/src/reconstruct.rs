//! Absolute depth recovery from a 2.5D pose and global scale estimation.
//!
//! With the normalization pair `(n, m)` at normalized image coordinates
//! `(x, y)` and relative depths `Ẑʳ`, the pair-distance constraint
//! `‖P̂_n − P̂_m‖ = C` expands to `a·Z² + 2b·Z + c = 0` in the unknown root
//! depth `Z`. The root in front of the camera is the larger one,
//! `(−b + √(b² − a·c)) / a`.

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::pose::{NormalizationConfig, NormalizedPose3D, Pose25D, Pose3D};
use crate::skeleton::{BoneStats, Skeleton, NUM_KEYPOINTS};

/// Discriminants in `[-DISCRIMINANT_TOL, 0)` are treated as zero.
pub const DISCRIMINANT_TOL: f64 = 1e-9;
/// Below this `a` the pair carries no depth information.
pub const MIN_LEADING_COEFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCoeffs {
    pub fn discriminant(&self) -> f64 {
        self.b * self.b - self.a * self.c
    }

    /// Value of `a·Z² + 2b·Z + c`.
    pub fn eval(&self, z: f64) -> f64 {
        (self.a * z + 2.0 * self.b) * z + self.c
    }
}

/// `pn`, `pm` are normalized image coordinates (pixels mapped through K⁻¹).
pub fn quadratic_coefficients(
    pn: [f64; 2],
    pm: [f64; 2],
    zn: f64,
    zm: f64,
    c: f64,
) -> QuadraticCoeffs {
    let [xn, yn] = pn;
    let [xm, ym] = pm;
    let a = (xn - xm).powi(2) + (yn - ym).powi(2);
    let cross = xn * xm + yn * ym;
    let b = zn * (xn * xn + yn * yn - cross) + zm * (xm * xm + ym * ym - cross);
    let cc = (xn * zn - xm * zm).powi(2) + (yn * zn - ym * zm).powi(2) + (zn - zm).powi(2) - c * c;
    QuadraticCoeffs { a, b, c: cc }
}

/// Larger root of `a·Z² + 2b·Z + c`, evaluated without cancellation.
pub fn solve_zroot(q: &QuadraticCoeffs) -> Result<f64> {
    if !(q.a > MIN_LEADING_COEFF) {
        return Err(Error::DegenerateProjection(q.a));
    }
    let disc = q.discriminant();
    if !disc.is_finite() {
        return Err(Error::NonFinite("quadratic coefficients"));
    }
    if disc < -DISCRIMINANT_TOL {
        return Err(Error::NoRealSolution(disc));
    }
    let root = disc.max(0.0).sqrt();
    if q.b <= 0.0 {
        Ok((root - q.b) / q.a)
    } else {
        // product of the roots is c/a
        Ok(q.c / (-q.b - root))
    }
}

/// Recovers the scale-normalized 3D pose. Invalid keypoints come back at the
/// origin and stay invalid.
pub fn reconstruct_pose(
    p25: &Pose25D,
    k: &CameraIntrinsics,
    cfg: &NormalizationConfig,
) -> Result<NormalizedPose3D> {
    let (n, m) = cfg.pair;
    for idx in [n, m] {
        if !p25.valid[idx] {
            return Err(Error::InvalidPair(idx));
        }
    }
    let normalized: [[f64; 2]; NUM_KEYPOINTS] =
        p25.points.map(|p| k.pixel_to_normalized([p[0], p[1]]));
    let q = quadratic_coefficients(
        normalized[n],
        normalized[m],
        p25.points[n][2],
        p25.points[m][2],
        cfg.c,
    );
    let zroot = solve_zroot(&q)?;
    let mut pose = Pose3D::new([[0.0; 3]; NUM_KEYPOINTS]);
    pose.valid = p25.valid;
    for i in 0..NUM_KEYPOINTS {
        if !p25.valid[i] {
            continue;
        }
        let z = zroot + p25.points[i][2];
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth { index: i, z });
        }
        pose.points[i] = [normalized[i][0] * z, normalized[i][1] * z, z];
    }
    Ok(NormalizedPose3D { pose, c: cfg.c })
}

pub fn reconstruct_batch(
    exec: Execution,
    poses: &[Pose25D],
    k: &CameraIntrinsics,
    cfg: &NormalizationConfig,
) -> Vec<Result<NormalizedPose3D>> {
    map_slice(exec, poses, |p| reconstruct_pose(p, k, cfg))
}

/// Least-squares scale over bones with two valid endpoints, returned in the
/// same convention as the normalization scale `s` (so `absolute_pose` undoes
/// normalization with it).
pub fn recover_scale(pose: &NormalizedPose3D, stats: &BoneStats, skel: &Skeleton) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in &skel.bones {
        let p = &pose.pose;
        if !(p.valid[b.child] && p.valid[b.parent]) {
            continue;
        }
        let (u, v) = (p.points[b.child], p.points[b.parent]);
        let d = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
        if !(d > 0.0 && d.is_finite()) {
            continue;
        }
        num += stats.get(b.id) * d;
        den += d * d;
    }
    if den == 0.0 {
        return Err(Error::NoValidBones);
    }
    let s = pose.c * num / den;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::BadScale(s));
    }
    Ok(s)
}

/// The least-squares objective `Σ (ŝ/C · d − μ)²` that [`recover_scale`] minimizes.
pub fn scale_objective(pose: &NormalizedPose3D, stats: &BoneStats, skel: &Skeleton, s: f64) -> f64 {
    let p = &pose.pose;
    skel.bones
        .iter()
        .filter(|b| p.valid[b.child] && p.valid[b.parent])
        .map(|b| {
            let (u, v) = (p.points[b.child], p.points[b.parent]);
            let d = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
            (s / pose.c * d - stats.get(b.id)).powi(2)
        })
        .sum()
}

/// `P = (ŝ / C) · P̂`.
pub fn absolute_pose(pose: &NormalizedPose3D, scale: f64) -> Result<Pose3D> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::BadScale(scale));
    }
    Ok(pose.pose.scaled(scale / pose.c))
}
