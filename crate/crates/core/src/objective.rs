//! Multi-task 2.5D loss with depth supervision only where 3D labels exist,
//! plus the 2D/3D sample mixer used to build mixed batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{HeatmapKind, HeatmapStack};
use crate::pose::{Pose25D, Pose2D};
use crate::skeleton::NUM_KEYPOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    fn apply(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub norm_xy: Norm,
    pub norm_z: Norm,
}

impl LossConfig {
    /// Latent heatmap pipeline: depth term weighted 20 to match the 2D pixel term.
    pub fn latent() -> Self {
        LossConfig {
            alpha: 20.0,
            norm_xy: Norm::L1,
            norm_z: Norm::L1,
        }
    }

    /// Holistic regression on mean-normalized poses.
    pub fn holistic() -> Self {
        LossConfig {
            alpha: 1.0,
            norm_xy: Norm::L1,
            norm_z: Norm::L1,
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::latent()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleAnnotations {
    pub gt_2d: Pose2D,
    /// Root-relative normalized depths with their own validity, when 3D labels exist.
    pub gt_zr: Option<([f64; NUM_KEYPOINTS], [bool; NUM_KEYPOINTS])>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub xy: f64,
    pub z: f64,
}

pub fn pose_loss(pred: &Pose25D, ann: &SampleAnnotations, cfg: &LossConfig) -> Result<LossParts> {
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::Config(format!(
            "alpha must be positive, got {}",
            cfg.alpha
        )));
    }
    let mut xy_sum = 0.0;
    let mut xy_n = 0usize;
    for k in 0..NUM_KEYPOINTS {
        if !(ann.gt_2d.valid[k] && pred.valid[k]) {
            continue;
        }
        let g = ann.gt_2d.points[k];
        let p = pred.points[k];
        xy_sum += cfg.norm_xy.apply(&[p[0] - g[0], p[1] - g[1]]);
        xy_n += 1;
    }
    if xy_n == 0 {
        return Err(Error::NoValidKeypoints);
    }
    let xy = xy_sum / xy_n as f64;

    let z = match &ann.gt_zr {
        None => 0.0,
        Some((depths, valid)) => {
            let terms: Vec<f64> = (0..NUM_KEYPOINTS)
                .filter(|&k| valid[k] && pred.valid[k])
                .map(|k| cfg.norm_z.apply(&[pred.points[k][2] - depths[k]]))
                .collect();
            if terms.is_empty() {
                0.0
            } else {
                terms.iter().sum::<f64>() / terms.len() as f64
            }
        }
    };
    Ok(LossParts {
        total: xy + cfg.alpha * z,
        xy,
        z,
    })
}

/// Mean squared error over every likelihood and depth cell of two direct stacks.
pub fn heatmap_loss_direct(pred: &HeatmapStack, target: &HeatmapStack) -> Result<f64> {
    if pred.kind != HeatmapKind::Direct || target.kind != HeatmapKind::Direct {
        return Err(Error::ShapeMismatch("both stacks must be direct".into()));
    }
    if pred.grid != target.grid
        || pred.num_keypoints != target.num_keypoints
        || pred.likelihood.len() != target.likelihood.len()
        || pred.depth.len() != target.depth.len()
    {
        return Err(Error::ShapeMismatch("stacks differ in shape".into()));
    }
    let n = pred.likelihood.len() + pred.depth.len();
    if n == 0 {
        return Err(Error::ShapeMismatch("empty stacks".into()));
    }
    let sq: f64 = pred
        .likelihood
        .iter()
        .zip(&target.likelihood)
        .chain(pred.depth.iter().zip(&target.depth))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleTag {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

/// Seeded stream that picks the 2D-only or 3D pool with equal probability,
/// then a sample uniformly within it.
#[derive(Debug, Clone)]
pub struct SampleMixer {
    rng: ChaCha8Rng,
    two_d: Vec<usize>,
    three_d: Vec<usize>,
}

impl SampleMixer {
    pub fn new(seed: u64, tags: &[SampleTag]) -> Result<Self> {
        let pick = |t| {
            tags.iter()
                .enumerate()
                .filter(|(_, &x)| x == t)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        let (two_d, three_d) = (pick(SampleTag::TwoD), pick(SampleTag::ThreeD));
        if two_d.is_empty() && three_d.is_empty() {
            return Err(Error::EmptyPools);
        }
        Ok(SampleMixer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            two_d,
            three_d,
        })
    }

    /// Index into the tag list of the next sample.
    pub fn next_index(&mut self) -> usize {
        let pool = match (self.two_d.is_empty(), self.three_d.is_empty()) {
            (false, true) => &self.two_d,
            (true, false) => &self.three_d,
            _ => {
                if self.rng.random_bool(0.5) {
                    &self.two_d
                } else {
                    &self.three_d
                }
            }
        };
        pool[self.rng.random_range(0..pool.len())]
    }

    pub fn schedule(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.next_index()).collect()
    }
}
