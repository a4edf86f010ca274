//! Central-difference checks of the analytic heatmap gradients.
//!
//! For a seeded random problem and random upstream cotangent `u`, each input
//! coordinate `v` is checked by comparing the analytic VJP entry with
//! `(L(v + ε) − L(v − ε)) / 2ε`, where `L = u · f`. Only forward evaluations
//! enter the numeric side.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::heatmap::{
    decode_keypoint, depth_readout_unchecked, softargmax_unchecked, softmax_map, vjp_decode_latent,
    vjp_depth_readout, vjp_softargmax, vjp_softmax_map, HeatmapGrid, HeatmapKind, HeatmapStack,
    SpreadParams,
};
use crate::skeleton::NUM_KEYPOINTS;

/// Denominator floor of the relative error; differences below
/// `REL_FLOOR · tolerance` in absolute terms always pass.
pub const REL_FLOOR: f64 = 1e-6;
const MAX_REPORTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    SpatialSoftmax,
    Softargmax,
    DepthReadout,
    DecodeLatent,
}

impl FromStr for GradTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial_softmax" => Ok(GradTarget::SpatialSoftmax),
            "softargmax" => Ok(GradTarget::Softargmax),
            "depth_readout" => Ok(GradTarget::DepthReadout),
            "decode_latent" => Ok(GradTarget::DecodeLatent),
            other => Err(Error::UnknownTarget(other.to_string())),
        }
    }
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GradTarget::SpatialSoftmax => "spatial_softmax",
            GradTarget::Softargmax => "softargmax",
            GradTarget::DepthReadout => "depth_readout",
            GradTarget::DecodeLatent => "decode_latent",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub target: GradTarget,
    pub first_seed: u64,
    pub seeds: u64,
    pub eps: f64,
    pub tolerance: f64,
    pub zero_upstream: bool,
}

impl GradcheckConfig {
    pub fn new(target: GradTarget) -> Self {
        GradcheckConfig {
            target,
            first_seed: 0,
            seeds: 100,
            eps: 1e-4,
            tolerance: 1e-4,
            zero_upstream: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckStatus {
    Pass,
    /// Every mismatch disappears when the difference quotient is taken at
    /// [`REFERENCE_EPS`], so the chosen step is at fault, not the gradient.
    FdBreakdown,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub seed: u64,
    pub class: String,
    pub map: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub target: GradTarget,
    pub seeds: u64,
    pub eps: f64,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub classes: Vec<ClassReport>,
    pub failures: Vec<Mismatch>,
    pub status: GradcheckStatus,
}

struct Check {
    class: &'static str,
    map: usize,
    index: usize,
    analytic: f64,
    numeric: f64,
    rel_err: f64,
    /// For mismatches: whether the analytic value agrees with the difference
    /// quotient at [`REFERENCE_EPS`].
    reference_ok: bool,
}

/// A step where central differences are well conditioned for O(1) inputs.
pub const REFERENCE_EPS: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `fd(h)` returns `(L(v + h), L(v − h))` for the coordinate under test.
fn compare<F: Fn(f64) -> (f64, f64)>(
    class: &'static str,
    map: usize,
    index: usize,
    analytic: f64,
    eps: f64,
    tolerance: f64,
    fd: F,
) -> Check {
    let quotient = |h: f64| {
        let (lp, lm) = fd(h);
        (lp - lm) / (2.0 * h)
    };
    let numeric = quotient(eps);
    let err = rel_err(analytic, numeric);
    let reference_ok = err < tolerance || rel_err(analytic, quotient(REFERENCE_EPS)) < tolerance;
    Check {
        class,
        map,
        index,
        analytic,
        numeric,
        rel_err: err,
        reference_ok,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Perturbs `v[i]` by ±h and evaluates `f` at both points.
fn central<F: Fn(&[f64]) -> f64>(v: &[f64], i: usize, h: f64, f: F) -> (f64, f64) {
    let mut w = v.to_vec();
    w[i] = v[i] + h;
    let lp = f(&w);
    w[i] = v[i] - h;
    let lm = f(&w);
    (lp, lm)
}

struct Problem {
    grid: HeatmapGrid,
    latent: Vec<Vec<f64>>,
    depth: Vec<Vec<f64>>,
    beta: Vec<f64>,
    upstream: Vec<Vec<f64>>,
}

fn random_problem(seed: u64, maps: usize, outputs: usize, zero_upstream: bool) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = HeatmapGrid {
        width: rng.random_range(3..=10),
        height: rng.random_range(3..=10),
    };
    let cells = grid.cells();
    let mut field = |lo: f64, hi: f64, n: usize| {
        (0..n)
            .map(|_| rng.random_range(lo..hi))
            .collect::<Vec<f64>>()
    };
    let latent = (0..maps).map(|_| field(-2.0, 2.0, cells)).collect();
    let depth = (0..maps).map(|_| field(-1.0, 1.0, cells)).collect();
    let beta = field(0.5, 2.0, maps);
    let upstream = (0..maps)
        .map(|_| {
            let n = if outputs == 0 { cells } else { outputs };
            if zero_upstream {
                vec![0.0; n]
            } else {
                field(-1.0, 1.0, n)
            }
        })
        .collect();
    Problem {
        grid,
        latent,
        depth,
        beta,
        upstream,
    }
}

fn check_seed(cfg: &GradcheckConfig, seed: u64) -> Vec<Check> {
    let (eps, tol) = (cfg.eps, cfg.tolerance);
    let mut out = Vec::new();
    match cfg.target {
        GradTarget::SpatialSoftmax => {
            let pb = random_problem(seed, 4, 0, cfg.zero_upstream);
            for m in 0..4 {
                let (h, b, u) = (&pb.latent[m], pb.beta[m], &pb.upstream[m]);
                let (gh, gb) = vjp_softmax_map(h, b, u);
                for i in 0..h.len() {
                    out.push(compare("likelihood", m, i, gh[i], eps, tol, |step| {
                        central(h, i, step, |v| dot(&softmax_map(v, b), u))
                    }));
                }
                out.push(compare("beta", m, 0, gb, eps, tol, |step| {
                    central(&[b], 0, step, |v| dot(&softmax_map(h, v[0]), u))
                }));
            }
        }
        GradTarget::Softargmax => {
            let pb = random_problem(seed, 4, 2, cfg.zero_upstream);
            for m in 0..4 {
                let q = softmax_map(&pb.latent[m], pb.beta[m]);
                let u = &pb.upstream[m];
                let g = vjp_softargmax(pb.grid, [u[0], u[1]]);
                for i in 0..q.len() {
                    out.push(compare("probability", m, i, g[i], eps, tol, |step| {
                        central(&q, i, step, |v| dot(&softargmax_unchecked(v, pb.grid), u))
                    }));
                }
            }
        }
        GradTarget::DepthReadout => {
            let pb = random_problem(seed, 4, 1, cfg.zero_upstream);
            for m in 0..4 {
                let q = softmax_map(&pb.latent[m], pb.beta[m]);
                let (d, u) = (&pb.depth[m], pb.upstream[m][0]);
                let (gq, gd) = vjp_depth_readout(&q, d, u);
                for i in 0..q.len() {
                    out.push(compare("probability", m, i, gq[i], eps, tol, |step| {
                        central(&q, i, step, |v| u * depth_readout_unchecked(v, d))
                    }));
                    out.push(compare("depth", m, i, gd[i], eps, tol, |step| {
                        central(d, i, step, |v| u * depth_readout_unchecked(&q, v))
                    }));
                }
            }
        }
        GradTarget::DecodeLatent => {
            let pb = random_problem(seed, NUM_KEYPOINTS, 3, cfg.zero_upstream);
            let stack = HeatmapStack {
                kind: HeatmapKind::Latent,
                grid: pb.grid,
                num_keypoints: NUM_KEYPOINTS,
                likelihood: pb.latent.concat(),
                depth: pb.depth.concat(),
            };
            let upstream: Vec<[f64; 3]> = pb.upstream.iter().map(|u| [u[0], u[1], u[2]]).collect();
            let grads = vjp_decode_latent(
                Execution::Sequential,
                &stack,
                &SpreadParams(pb.beta.clone()),
                &upstream,
            )
            .expect("random stacks are well formed");
            let cells = pb.grid.cells();
            for m in 0..NUM_KEYPOINTS {
                let (h, d, b, u) = (&pb.latent[m], &pb.depth[m], pb.beta[m], &pb.upstream[m]);
                for i in 0..cells {
                    out.push(compare(
                        "likelihood",
                        m,
                        i,
                        grads.likelihood[m * cells + i],
                        eps,
                        tol,
                        |step| central(h, i, step, |v| dot(&decode_keypoint(v, d, b, pb.grid), u)),
                    ));
                    out.push(compare(
                        "depth",
                        m,
                        i,
                        grads.depth[m * cells + i],
                        eps,
                        tol,
                        |step| central(d, i, step, |v| dot(&decode_keypoint(h, v, b, pb.grid), u)),
                    ));
                }
                out.push(compare("beta", m, 0, grads.beta[m], eps, tol, |step| {
                    central(&[b], 0, step, |v| {
                        dot(&decode_keypoint(h, d, v[0], pb.grid), u)
                    })
                }));
            }
        }
    }
    out
}

pub fn gradcheck(exec: Execution, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
        return Err(Error::Config(format!(
            "eps must be positive, got {}",
            cfg.eps
        )));
    }
    if !(cfg.tolerance > 0.0) || cfg.seeds == 0 {
        return Err(Error::Config(
            "tolerance and seed count must be positive".into(),
        ));
    }
    let per_seed = map_range(exec, cfg.seeds as usize, |i| {
        let seed = cfg.first_seed + i as u64;
        (seed, check_seed(cfg, seed))
    });

    let mut classes: Vec<ClassReport> = Vec::new();
    let mut failures = Vec::new();
    let mut max_rel_err = 0.0f64;
    let mut all_reference_ok = true;
    for (seed, checks) in per_seed {
        for c in checks {
            let class = match classes.iter_mut().find(|r| r.name == c.class) {
                Some(r) => r,
                None => {
                    classes.push(ClassReport {
                        name: c.class.to_string(),
                        checked: 0,
                        max_rel_err: 0.0,
                    });
                    classes.last_mut().unwrap()
                }
            };
            class.checked += 1;
            class.max_rel_err = class.max_rel_err.max(c.rel_err);
            max_rel_err = max_rel_err.max(c.rel_err);
            if !(c.rel_err < cfg.tolerance) {
                all_reference_ok &= c.reference_ok;
                if failures.len() < MAX_REPORTED {
                    failures.push(Mismatch {
                        seed,
                        class: c.class.to_string(),
                        map: c.map,
                        index: c.index,
                        analytic: c.analytic,
                        numeric: c.numeric,
                        rel_err: c.rel_err,
                    });
                }
            }
        }
    }
    let status = if failures.is_empty() {
        GradcheckStatus::Pass
    } else if all_reference_ok {
        GradcheckStatus::FdBreakdown
    } else {
        GradcheckStatus::Fail
    };
    Ok(GradcheckReport {
        target: cfg.target,
        seeds: cfg.seeds,
        eps: cfg.eps,
        tolerance: cfg.tolerance,
        max_rel_err,
        classes,
        failures,
        status,
    })
}
