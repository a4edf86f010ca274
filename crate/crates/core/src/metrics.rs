//! End-point error, PCK curves with their normalized area, PCKh, and the two
//! 3D evaluation protocols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{compensated_sum, map_range, Execution};
use crate::pose::{Pose2D, Pose3D};
use crate::skeleton::ROOT;

#[derive(Debug, Clone, PartialEq)]
pub struct EpeStats {
    /// One entry per valid keypoint, in keypoint order.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

fn mean_median(errors: &[f64]) -> (f64, f64) {
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (mean, median)
}

/// Euclidean errors over keypoints with `valid[k]` set.
pub fn epe<const N: usize>(pred: &[[f64; N]], gt: &[[f64; N]], valid: &[bool]) -> Result<EpeStats> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(Error::ShapeMismatch("pose lengths differ".into()));
    }
    let errors: Vec<f64> = (0..pred.len())
        .filter(|&k| valid[k])
        .map(|k| {
            pred[k]
                .iter()
                .zip(&gt[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    if errors.is_empty() {
        return Err(Error::NoValidKeypoints);
    }
    let (mean, median) = mean_median(&errors);
    Ok(EpeStats {
        errors,
        mean,
        median,
    })
}

fn joint_validity(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

pub fn epe_3d(pred: &Pose3D, gt: &Pose3D) -> Result<EpeStats> {
    epe(
        &pred.points,
        &gt.points,
        &joint_validity(&pred.valid, &gt.valid),
    )
}

pub fn epe_2d(pred: &Pose2D, gt: &Pose2D) -> Result<EpeStats> {
    epe(
        &pred.points,
        &gt.points,
        &joint_validity(&pred.valid, &gt.valid),
    )
}

/// Translates `pred` so its root coincides with the ground-truth root.
pub fn align_root(pred: &Pose3D, gt: &Pose3D, root: usize) -> Result<Pose3D> {
    if root >= pred.points.len() || !pred.valid[root] || !gt.valid[root] {
        return Err(Error::InvalidRoot(root));
    }
    let (p, g) = (pred.points[root], gt.points[root]);
    Ok(pred.translated([g[0] - p[0], g[1] - p[1], g[2] - p[2]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PckPoint {
    pub threshold: f64,
    pub fraction: f64,
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty()
        || thresholds.iter().any(|t| !t.is_finite())
        || thresholds.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::EmptyThresholds);
    }
    Ok(())
}

/// Fraction of errors `≤ t` for each threshold. Non-finite errors never count
/// as correct.
pub fn pck_curve(errors: &[f64], thresholds: &[f64]) -> Result<Vec<PckPoint>> {
    check_thresholds(thresholds)?;
    if errors.is_empty() {
        return Err(Error::NoValidKeypoints);
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = sorted.partition_point(|&e| e <= t);
            PckPoint {
                threshold: t,
                fraction: hits as f64 / n,
            }
        })
        .collect())
}

/// Trapezoidal area under the curve divided by the threshold range.
pub fn auc(curve: &[PckPoint]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let span = curve[curve.len() - 1].threshold - curve[0].threshold;
    if !(span > 0.0) {
        return Err(Error::EmptyThresholds);
    }
    let area = compensated_sum(
        curve
            .windows(2)
            .map(|w| 0.5 * (w[0].fraction + w[1].fraction) * (w[1].threshold - w[0].threshold)),
    );
    Ok(area / span)
}

/// PCK of 2D errors measured in head lengths.
pub fn pckh_curve(
    pred: &Pose2D,
    gt: &Pose2D,
    head_length: f64,
    thresholds: &[f64],
) -> Result<Vec<PckPoint>> {
    if !(head_length > 0.0 && head_length.is_finite()) {
        return Err(Error::BadHeadLength(head_length));
    }
    let stats = epe_2d(pred, gt)?;
    let scaled: Vec<f64> = stats.errors.iter().map(|e| e / head_length).collect();
    pck_curve(&scaled, thresholds)
}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn default_thresholds_3d() -> Vec<f64> {
    linspace(20.0, 50.0, 31)
}

pub fn default_thresholds_2d() -> Vec<f64> {
    linspace(0.0, 30.0, 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Root keypoints are aligned before measuring.
    RootAligned,
    /// Absolute poses are compared as given.
    AbsoluteWithScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub space: Space,
    pub units: String,
    pub num_samples: usize,
    /// Ground-truth keypoints whose prediction was missing; scored as misses.
    pub failed_keypoints: usize,
    pub per_keypoint_errors: Vec<f64>,
    /// Over predicted keypoints only; `None` when every prediction failed.
    pub epe_mean: Option<f64>,
    pub epe_median: Option<f64>,
    pub pck: Vec<PckPoint>,
    pub auc: f64,
}

impl EvalReport {
    fn build(
        protocol: Protocol,
        space: Space,
        units: &str,
        num_samples: usize,
        per_sample: Vec<Result<Vec<f64>>>,
        thresholds: &[f64],
    ) -> Result<EvalReport> {
        check_thresholds(thresholds)?;
        if thresholds.len() < 2 {
            return Err(Error::TooFewPoints);
        }
        let mut errors = Vec::new();
        for s in per_sample {
            errors.extend(s?);
        }
        let failed_keypoints = errors.iter().filter(|e| !e.is_finite()).count();
        let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
        if errors.is_empty() {
            return Err(Error::NoValidKeypoints);
        }
        let pck = pck_curve(&errors, thresholds)?;
        let (epe_mean, epe_median) = if finite.is_empty() {
            (None, None)
        } else {
            let (m, md) = mean_median(&finite);
            (Some(m), Some(md))
        };
        Ok(EvalReport {
            protocol,
            space,
            units: units.to_string(),
            num_samples,
            failed_keypoints,
            auc: auc(&pck)?,
            per_keypoint_errors: finite,
            epe_mean,
            epe_median,
            pck,
        })
    }
}

fn missing_errors(valid: &[bool]) -> Result<Vec<f64>> {
    Ok(valid
        .iter()
        .filter(|&&v| v)
        .map(|_| f64::INFINITY)
        .collect())
}

/// 3D evaluation over paired samples. A `None` prediction scores every valid
/// ground-truth keypoint as a miss.
pub fn evaluate_3d(
    exec: Execution,
    preds: &[Option<Pose3D>],
    gts: &[Pose3D],
    protocol: Protocol,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} targets",
            preds.len(),
            gts.len()
        )));
    }
    let per_sample = map_range(exec, gts.len(), |i| {
        let gt = &gts[i];
        let Some(pred) = &preds[i] else {
            return missing_errors(&gt.valid);
        };
        let pred = match protocol {
            Protocol::RootAligned => align_root(pred, gt, ROOT)?,
            Protocol::AbsoluteWithScale => pred.clone(),
        };
        match epe_3d(&pred, gt) {
            Err(Error::NoValidKeypoints) => Ok(vec![]),
            other => other.map(|s| s.errors),
        }
    });
    EvalReport::build(
        protocol,
        Space::ThreeD,
        "mm",
        gts.len(),
        per_sample,
        thresholds,
    )
}

/// 2D evaluation. With `head_length` the errors and thresholds are in head lengths (PCKh).
pub fn evaluate_2d(
    exec: Execution,
    preds: &[Option<Pose2D>],
    gts: &[Pose2D],
    head_length: Option<f64>,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} targets",
            preds.len(),
            gts.len()
        )));
    }
    let norm = match head_length {
        Some(h) if !(h > 0.0 && h.is_finite()) => return Err(Error::BadHeadLength(h)),
        Some(h) => h,
        None => 1.0,
    };
    let per_sample = map_range(exec, gts.len(), |i| {
        let gt = &gts[i];
        let Some(pred) = &preds[i] else {
            return missing_errors(&gt.valid);
        };
        match epe_2d(pred, gt) {
            Err(Error::NoValidKeypoints) => Ok(vec![]),
            other => other.map(|s| s.errors.iter().map(|e| e / norm).collect()),
        }
    });
    let units = if head_length.is_some() {
        "head_length"
    } else {
        "px"
    };
    EvalReport::build(
        Protocol::AbsoluteWithScale,
        Space::TwoD,
        units,
        gts.len(),
        per_sample,
        thresholds,
    )
}
