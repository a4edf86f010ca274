//! Direct and latent 2.5D heatmaps.
//!
//! A stack holds `K` likelihood maps and `K` depth maps, each `H × W`,
//! row-major. Map cell `(row, col)` sits at pixel `(x, y) = (col, row)` of the
//! heatmap resolution.
//!
//! Direct stacks carry Gaussian-shaped likelihoods decoded by argmax. Latent
//! stacks carry unnormalized scores turned into probabilities with a spatial
//! softmax of spread `β_k`; keypoints are read out by softargmax and the
//! expected depth under that probability map. The latent decode is smooth in
//! every input and [`vjp_decode_latent`] gives its exact vector-Jacobian product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{compensated_sum, for_each_chunk_mut, map_range, Execution};
use crate::pose::Pose25D;
use crate::skeleton::NUM_KEYPOINTS;

/// Tolerance on the total mass of a probability map.
pub const NORMALIZATION_TOL: f64 = 1e-4;
pub const DEFAULT_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
}

impl HeatmapGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Config(format!(
                "heatmap grid {width}x{height} is smaller than 2x2"
            )));
        }
        Ok(HeatmapGrid { width, height })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Pixel coordinates of a row-major cell index.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        [(idx % self.width) as f64, (idx / self.width) as f64]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapKind {
    Direct,
    Latent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub kind: HeatmapKind,
    pub grid: HeatmapGrid,
    pub num_keypoints: usize,
    pub likelihood: Vec<f64>,
    pub depth: Vec<f64>,
}

impl HeatmapStack {
    pub fn zeros(kind: HeatmapKind, grid: HeatmapGrid, num_keypoints: usize) -> Self {
        let n = num_keypoints * grid.cells();
        HeatmapStack {
            kind,
            grid,
            num_keypoints,
            likelihood: vec![0.0; n],
            depth: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_keypoints * self.grid.cells();
        if self.likelihood.len() != n || self.depth.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} cells per channel, got {} and {}",
                self.likelihood.len(),
                self.depth.len()
            )));
        }
        if self
            .likelihood
            .iter()
            .chain(&self.depth)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("heatmap stack"));
        }
        if self.kind == HeatmapKind::Direct
            && self.likelihood.iter().any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::Format(
                "direct likelihoods must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn likelihood_map(&self, k: usize) -> &[f64] {
        let c = self.grid.cells();
        &self.likelihood[k * c..(k + 1) * c]
    }

    pub fn depth_map(&self, k: usize) -> &[f64] {
        let c = self.grid.cells();
        &self.depth[k * c..(k + 1) * c]
    }
}

/// Per-keypoint softmax spread `β_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpreadParams(pub Vec<f64>);

impl SpreadParams {
    pub fn uniform(num_keypoints: usize, beta: f64) -> Self {
        SpreadParams(vec![beta; num_keypoints])
    }

    pub fn validate(&self, num_keypoints: usize) -> Result<()> {
        if self.0.len() != num_keypoints {
            return Err(Error::ShapeMismatch(format!(
                "{} spread values for {num_keypoints} keypoints",
                self.0.len()
            )));
        }
        if self.0.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
            return Err(Error::Config(
                "spread values must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// How the target Gaussian measures distance to the keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exponent {
    /// `exp(−‖p − p_gt‖ / σ²)`
    L1,
    /// `exp(−‖p − p_gt‖² / σ²)`
    #[default]
    L2Sq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfGrid {
    #[default]
    Error,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    pub sigma: f64,
    pub exponent: Exponent,
    pub out_of_grid: OutOfGrid,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            sigma: DEFAULT_SIGMA,
            exponent: Exponent::L2Sq,
            out_of_grid: OutOfGrid::Error,
        }
    }
}

fn target_centers(
    p25: &Pose25D,
    grid: HeatmapGrid,
    opts: &EncodeOptions,
) -> Result<Vec<Option<[f64; 3]>>> {
    if !(opts.sigma > 0.0 && opts.sigma.is_finite()) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {}",
            opts.sigma
        )));
    }
    p25.points
        .iter()
        .enumerate()
        .map(|(i, &[x, y, z])| {
            if !p25.valid[i] {
                return Ok(None);
            }
            if ![x, y, z].iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("2.5D pose"));
            }
            if grid.contains(x, y) {
                return Ok(Some([x, y, z]));
            }
            match opts.out_of_grid {
                OutOfGrid::Clamp => Ok(Some([
                    x.clamp(0.0, (grid.width - 1) as f64),
                    y.clamp(0.0, (grid.height - 1) as f64),
                    z,
                ])),
                OutOfGrid::Error => Err(Error::OutOfGrid {
                    index: i,
                    x,
                    y,
                    width: grid.width,
                    height: grid.height,
                }),
            }
        })
        .collect()
}

/// Gaussian likelihood targets with depth maps `Ẑʳ_k · H_k`. Invalid
/// keypoints get all-zero maps.
pub fn encode_direct(
    exec: Execution,
    p25: &Pose25D,
    grid: HeatmapGrid,
    opts: &EncodeOptions,
) -> Result<HeatmapStack> {
    let centers = target_centers(p25, grid, opts)?;
    let mut stack = HeatmapStack::zeros(HeatmapKind::Direct, grid, NUM_KEYPOINTS);
    let s2 = opts.sigma * opts.sigma;
    let cells = grid.cells();
    for_each_chunk_mut(exec, &mut stack.likelihood, cells, |k, map| {
        if let Some([cx, cy, _]) = centers[k] {
            for (idx, v) in map.iter_mut().enumerate() {
                let [x, y] = grid.coords(idx);
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                let dist = match opts.exponent {
                    Exponent::L2Sq => d2,
                    Exponent::L1 => d2.sqrt(),
                };
                *v = (-dist / s2).exp();
            }
        }
    });
    let likelihood = &stack.likelihood;
    for_each_chunk_mut(exec, &mut stack.depth, cells, |k, map| {
        if let Some([_, _, z]) = centers[k] {
            let src = &likelihood[k * cells..(k + 1) * cells];
            for (v, h) in map.iter_mut().zip(src) {
                *v = z * h;
            }
        }
    });
    Ok(stack)
}

/// Latent stack whose softmax at `β = 1` is the normalized direct target: the
/// likelihood channel holds the log-target and the depth channel is constant
/// `Ẑʳ_k`.
pub fn encode_latent(
    exec: Execution,
    p25: &Pose25D,
    grid: HeatmapGrid,
    opts: &EncodeOptions,
) -> Result<HeatmapStack> {
    let centers = target_centers(p25, grid, opts)?;
    let mut stack = HeatmapStack::zeros(HeatmapKind::Latent, grid, NUM_KEYPOINTS);
    let s2 = opts.sigma * opts.sigma;
    let cells = grid.cells();
    for_each_chunk_mut(exec, &mut stack.likelihood, cells, |k, map| {
        if let Some([cx, cy, _]) = centers[k] {
            for (idx, v) in map.iter_mut().enumerate() {
                let [x, y] = grid.coords(idx);
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                *v = -match opts.exponent {
                    Exponent::L2Sq => d2,
                    Exponent::L1 => d2.sqrt(),
                } / s2;
            }
        }
    });
    for_each_chunk_mut(exec, &mut stack.depth, cells, |k, map| {
        if let Some([_, _, z]) = centers[k] {
            map.fill(z);
        }
    });
    Ok(stack)
}

/// Index of the largest value, ties going to the lowest index.
pub fn argmax(map: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in map.iter().enumerate().skip(1) {
        if v > map[best] {
            best = i;
        }
    }
    best
}

fn require_stack(stack: &HeatmapStack, kind: HeatmapKind) -> Result<()> {
    if stack.kind != kind {
        return Err(Error::ShapeMismatch(format!(
            "expected a {kind:?} stack, got {:?}",
            stack.kind
        )));
    }
    if stack.num_keypoints != NUM_KEYPOINTS {
        return Err(Error::ShapeMismatch(format!(
            "a pose needs {NUM_KEYPOINTS} maps, stack has {}",
            stack.num_keypoints
        )));
    }
    stack.validate()
}

pub fn decode_direct(stack: &HeatmapStack) -> Result<Pose25D> {
    require_stack(stack, HeatmapKind::Direct)?;
    let mut out = Pose25D::new([[0.0; 3]; NUM_KEYPOINTS]);
    for (k, p) in out.points.iter_mut().enumerate() {
        let idx = argmax(stack.likelihood_map(k));
        let [x, y] = stack.grid.coords(idx);
        *p = [x, y, stack.depth_map(k)[idx]];
    }
    Ok(out)
}

/// `exp(β·h) / Σ exp(β·h)` over one map, with the max subtracted first.
pub fn softmax_map(latent: &[f64], beta: f64) -> Vec<f64> {
    let max = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = latent.iter().map(|&h| (beta * (h - max)).exp()).collect();
    let total = compensated_sum(out.iter().copied());
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

/// Spatial softmax of every likelihood map in a `K × H × W` buffer.
pub fn spatial_softmax(
    exec: Execution,
    latent: &[f64],
    grid: HeatmapGrid,
    beta: &SpreadParams,
) -> Result<Vec<f64>> {
    let cells = grid.cells();
    if latent.len() != beta.0.len() * cells {
        return Err(Error::ShapeMismatch(format!(
            "{} latent cells for {} maps of {cells}",
            latent.len(),
            beta.0.len()
        )));
    }
    beta.validate(beta.0.len())?;
    if latent.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent heatmap"));
    }
    let mut out = latent.to_vec();
    for_each_chunk_mut(exec, &mut out, cells, |k, map| {
        let p = softmax_map(map, beta.0[k]);
        map.copy_from_slice(&p);
    });
    Ok(out)
}

fn check_normalized(prob: &[f64]) -> Result<()> {
    if prob.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::NotNormalized(f64::NAN));
    }
    let total = compensated_sum(prob.iter().copied());
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

pub(crate) fn softargmax_unchecked(prob: &[f64], grid: HeatmapGrid) -> [f64; 2] {
    let x = compensated_sum(
        prob.iter()
            .enumerate()
            .map(|(i, q)| q * (i % grid.width) as f64),
    );
    let y = compensated_sum(
        prob.iter()
            .enumerate()
            .map(|(i, q)| q * (i / grid.width) as f64),
    );
    [x, y]
}

pub(crate) fn depth_readout_unchecked(prob: &[f64], depth: &[f64]) -> f64 {
    compensated_sum(prob.iter().zip(depth).map(|(q, d)| q * d))
}

/// Probability-weighted mean pixel location.
pub fn softargmax(prob: &[f64], grid: HeatmapGrid) -> Result<[f64; 2]> {
    if prob.len() != grid.cells() {
        return Err(Error::ShapeMismatch(format!(
            "{} cells for grid {grid:?}",
            prob.len()
        )));
    }
    check_normalized(prob)?;
    Ok(softargmax_unchecked(prob, grid))
}

/// Expected depth `Σ H(p)·D(p)` under a probability map.
pub fn depth_readout(prob: &[f64], depth: &[f64]) -> Result<f64> {
    if prob.len() != depth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} cells",
            prob.len(),
            depth.len()
        )));
    }
    check_normalized(prob)?;
    Ok(depth_readout_unchecked(prob, depth))
}

/// Decodes one keypoint: softmax, then softargmax and depth readout.
pub fn decode_keypoint(latent: &[f64], depth: &[f64], beta: f64, grid: HeatmapGrid) -> [f64; 3] {
    let prob = softmax_map(latent, beta);
    let [x, y] = softargmax_unchecked(&prob, grid);
    [x, y, depth_readout_unchecked(&prob, depth)]
}

fn check_latent(stack: &HeatmapStack, beta: &SpreadParams) -> Result<()> {
    if stack.kind != HeatmapKind::Latent {
        return Err(Error::ShapeMismatch("expected a latent stack".into()));
    }
    stack.validate()?;
    beta.validate(stack.num_keypoints)
}

/// `(x, y, Ẑʳ)` per map for a latent stack with any number of maps.
pub fn decode_latent_points(
    exec: Execution,
    stack: &HeatmapStack,
    beta: &SpreadParams,
) -> Result<Vec<[f64; 3]>> {
    check_latent(stack, beta)?;
    Ok(map_range(exec, stack.num_keypoints, |k| {
        decode_keypoint(
            stack.likelihood_map(k),
            stack.depth_map(k),
            beta.0[k],
            stack.grid,
        )
    }))
}

pub fn decode_latent(
    exec: Execution,
    stack: &HeatmapStack,
    beta: &SpreadParams,
) -> Result<Pose25D> {
    if stack.num_keypoints != NUM_KEYPOINTS {
        return Err(Error::ShapeMismatch(format!(
            "a pose needs {NUM_KEYPOINTS} maps, stack has {}",
            stack.num_keypoints
        )));
    }
    let pts = decode_latent_points(exec, stack, beta)?;
    let mut out = Pose25D::new([[0.0; 3]; NUM_KEYPOINTS]);
    out.points.copy_from_slice(&pts);
    Ok(out)
}

/// Cotangents of a latent stack's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCotangents {
    pub likelihood: Vec<f64>,
    pub depth: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Vector-Jacobian product of [`decode_latent_points`] for one map.
///
/// With `q = softmax(β·h)` and `w_j = g_x(x_j − x̄) + g_y(y_j − ȳ) + g_z(d_j − z̄)`:
/// `∂/∂h_j = β q_j w_j`, `∂/∂d_j = g_z q_j`, `∂/∂β = Σ_j q_j h_j w_j`.
pub fn vjp_decode_keypoint(
    latent: &[f64],
    depth: &[f64],
    beta: f64,
    grid: HeatmapGrid,
    upstream: [f64; 3],
    grad_latent: &mut [f64],
    grad_depth: &mut [f64],
) -> f64 {
    let prob = softmax_map(latent, beta);
    let [x, y] = softargmax_unchecked(&prob, grid);
    let z = depth_readout_unchecked(&prob, depth);
    let [gx, gy, gz] = upstream;
    // Σ q w = 0, so any shift of h leaves the β term unchanged; use the max
    // for the same conditioning as the forward softmax.
    let hmax = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut beta_terms = Vec::with_capacity(prob.len());
    for (j, &q) in prob.iter().enumerate() {
        let [px, py] = grid.coords(j);
        let w = gx * (px - x) + gy * (py - y) + gz * (depth[j] - z);
        grad_latent[j] = beta * q * w;
        grad_depth[j] = gz * q;
        beta_terms.push(q * (latent[j] - hmax) * w);
    }
    compensated_sum(beta_terms)
}

/// Exact VJP of [`decode_latent_points`]; `upstream[k]` is the cotangent of
/// `(x, y, Ẑʳ)` for map `k`.
pub fn vjp_decode_latent(
    exec: Execution,
    stack: &HeatmapStack,
    beta: &SpreadParams,
    upstream: &[[f64; 3]],
) -> Result<LatentCotangents> {
    check_latent(stack, beta)?;
    if upstream.len() != stack.num_keypoints {
        return Err(Error::ShapeMismatch(format!(
            "{} upstream cotangents for {} maps",
            upstream.len(),
            stack.num_keypoints
        )));
    }
    let cells = stack.grid.cells();
    let per_map = map_range(exec, stack.num_keypoints, |k| {
        let mut gl = vec![0.0; cells];
        let mut gd = vec![0.0; cells];
        let gb = vjp_decode_keypoint(
            stack.likelihood_map(k),
            stack.depth_map(k),
            beta.0[k],
            stack.grid,
            upstream[k],
            &mut gl,
            &mut gd,
        );
        (gl, gd, gb)
    });
    let mut out = LatentCotangents {
        likelihood: Vec::with_capacity(stack.likelihood.len()),
        depth: Vec::with_capacity(stack.depth.len()),
        beta: Vec::with_capacity(stack.num_keypoints),
    };
    for (gl, gd, gb) in per_map {
        out.likelihood.extend(gl);
        out.depth.extend(gd);
        out.beta.push(gb);
    }
    Ok(out)
}

/// VJP of [`softmax_map`]: returns `(∂/∂h, ∂/∂β)` for upstream `g` on the probabilities.
pub fn vjp_softmax_map(latent: &[f64], beta: f64, upstream: &[f64]) -> (Vec<f64>, f64) {
    let prob = softmax_map(latent, beta);
    let mean = compensated_sum(prob.iter().zip(upstream).map(|(q, g)| q * g));
    let hmax = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grad: Vec<f64> = prob
        .iter()
        .zip(upstream)
        .map(|(q, g)| beta * q * (g - mean))
        .collect();
    let gb = compensated_sum(
        prob.iter()
            .zip(upstream)
            .zip(latent)
            .map(|((q, g), h)| q * (h - hmax) * (g - mean)),
    );
    (grad, gb)
}

/// VJP of softargmax with respect to the probability cells.
pub fn vjp_softargmax(grid: HeatmapGrid, upstream: [f64; 2]) -> Vec<f64> {
    (0..grid.cells())
        .map(|j| {
            let [x, y] = grid.coords(j);
            upstream[0] * x + upstream[1] * y
        })
        .collect()
}

/// VJP of depth readout: `(∂/∂prob, ∂/∂depth)`.
pub fn vjp_depth_readout(prob: &[f64], depth: &[f64], upstream: f64) -> (Vec<f64>, Vec<f64>) {
    (
        depth.iter().map(|d| upstream * d).collect(),
        prob.iter().map(|q| upstream * q).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize) -> HeatmapGrid {
        HeatmapGrid::new(w, h).unwrap()
    }

    fn integer_pose(grid: HeatmapGrid) -> Pose25D {
        let mut p = Pose25D::new([[0.0; 3]; NUM_KEYPOINTS]);
        for (k, q) in p.points.iter_mut().enumerate() {
            let x = ((7 * k + 3) % grid.width) as f64;
            let y = ((5 * k + 11) % grid.height) as f64;
            *q = [x, y, if k == 0 { 0.0 } else { 0.05 * k as f64 - 0.4 }];
        }
        p
    }

    #[test]
    fn grid_rejects_tiny() {
        assert!(HeatmapGrid::new(1, 8).is_err());
        assert!(HeatmapGrid::new(2, 2).is_ok());
    }

    #[test]
    fn encode_direct_peaks() {
        let g = grid(32, 24);
        let p = integer_pose(g);
        let s = encode_direct(Execution::Sequential, &p, g, &EncodeOptions::default()).unwrap();
        s.validate().unwrap();
        for k in 0..NUM_KEYPOINTS {
            let [x, y, z] = p.points[k];
            let idx = y as usize * g.width + x as usize;
            assert_eq!(s.likelihood_map(k)[idx], 1.0);
            assert_eq!(s.depth_map(k)[idx], z);
        }
        let t = encode_direct(Execution::Parallel, &p, g, &EncodeOptions::default()).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn encode_exponents_differ() {
        let g = grid(16, 16);
        let mut p = integer_pose(g);
        p.points[0] = [5.0, 5.0, 0.0];
        let l2 = encode_direct(Execution::Sequential, &p, g, &EncodeOptions::default()).unwrap();
        let opts = EncodeOptions {
            exponent: Exponent::L1,
            ..Default::default()
        };
        let l1 = encode_direct(Execution::Sequential, &p, g, &opts).unwrap();
        // two pixels right of the peak: exp(-4/25) vs exp(-2/25)
        assert!((l2.likelihood_map(0)[5 * 16 + 7] - (-4.0f64 / 25.0).exp()).abs() < 1e-15);
        assert!((l1.likelihood_map(0)[5 * 16 + 7] - (-2.0f64 / 25.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn encode_out_of_grid_policies() {
        let g = grid(8, 8);
        let mut p = integer_pose(g);
        p.points[3] = [9.5, 2.0, 0.1];
        let err =
            encode_direct(Execution::Sequential, &p, g, &EncodeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfGrid { index: 3, .. }));
        let opts = EncodeOptions {
            out_of_grid: OutOfGrid::Clamp,
            ..Default::default()
        };
        let s = encode_direct(Execution::Sequential, &p, g, &opts).unwrap();
        assert_eq!(s.likelihood_map(3)[2 * 8 + 7], 1.0);
        p.valid[3] = false;
        let s = encode_direct(Execution::Sequential, &p, g, &EncodeOptions::default()).unwrap();
        assert!(s.likelihood_map(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direct_round_trip() {
        let g = grid(32, 24);
        let p = integer_pose(g);
        let s = encode_direct(Execution::Sequential, &p, g, &EncodeOptions::default()).unwrap();
        assert_eq!(decode_direct(&s).unwrap().points, p.points);
    }

    #[test]
    fn decode_direct_tie_and_single_cell() {
        let g = grid(10, 6);
        let mut s = HeatmapStack::zeros(HeatmapKind::Direct, g, NUM_KEYPOINTS);
        s.likelihood.fill(0.5);
        let p = decode_direct(&s).unwrap();
        assert_eq!(p.points[0], [0.0, 0.0, 0.0]);

        let mut s = HeatmapStack::zeros(HeatmapKind::Direct, g, NUM_KEYPOINTS);
        let idx = 3 * 10 + 7;
        s.likelihood[2 * g.cells() + idx] = 1.0;
        s.depth[2 * g.cells() + idx] = -0.25;
        assert_eq!(decode_direct(&s).unwrap().points[2], [7.0, 3.0, -0.25]);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_map(&[2.0; 12], 1.3);
        assert!(p.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));
        let base: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 40.0).collect();
        let a = softmax_map(&base, 2.0);
        let b = softmax_map(&shifted, 2.0);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
        let mut gap = vec![0.0; 12];
        gap[5] = 1.0;
        assert!(softmax_map(&gap, 1e3)[5] > 1.0 - 1e-6);
        let huge = softmax_map(&[1e308, -1e308, 0.0], 10.0);
        assert!(huge.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn spatial_softmax_shapes() {
        let g = grid(3, 2);
        let latent: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let beta = SpreadParams(vec![1.0, 2.0]);
        let p = spatial_softmax(Execution::Parallel, &latent, g, &beta).unwrap();
        assert!((compensated_sum(p[..6].iter().copied()) - 1.0).abs() < 1e-12);
        assert!((compensated_sum(p[6..].iter().copied()) - 1.0).abs() < 1e-12);
        assert!(spatial_softmax(Execution::Parallel, &latent[1..], g, &beta).is_err());
        assert!(spatial_softmax(
            Execution::Parallel,
            &latent,
            g,
            &SpreadParams(vec![1.0, 0.0])
        )
        .is_err());
    }

    #[test]
    fn softargmax_examples() {
        let g = grid(5, 9);
        let mut one = vec![0.0; 45];
        one[7 * 5 + 3] = 1.0;
        assert_eq!(softargmax(&one, g).unwrap(), [3.0, 7.0]);
        assert_eq!(softargmax(&[0.25; 4], grid(2, 2)).unwrap(), [0.5, 0.5]);
        let g = grid(6, 6);
        let mut two = vec![0.0; 36];
        two[5 * 6 + 2] = 0.5;
        two[5 * 6 + 4] = 0.5;
        assert_eq!(softargmax(&two, g).unwrap(), [3.0, 5.0]);
        assert!(matches!(
            softargmax(&[0.3; 4], grid(2, 2)),
            Err(Error::NotNormalized(_))
        ));
        assert!(softargmax(&[0.25; 3], grid(2, 2)).is_err());
    }

    #[test]
    fn depth_readout_examples() {
        let mut one = vec![0.0; 4];
        one[2] = 1.0;
        assert_eq!(depth_readout(&one, &[9.0, 9.0, 0.7, 9.0]).unwrap(), 0.7);
        let q = [0.1, 0.2, 0.3, 0.4];
        assert!((depth_readout(&q, &[0.25; 4]).unwrap() - 0.25).abs() < 1e-15);
        assert!((depth_readout(&[0.5, 0.5], &[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert!(depth_readout(&[0.5, 0.6], &[0.2, 0.4]).is_err());
    }

    #[test]
    fn latent_one_hot_decode() {
        let g = grid(12, 10);
        let mut s = HeatmapStack::zeros(HeatmapKind::Latent, g, NUM_KEYPOINTS);
        for k in 0..NUM_KEYPOINTS {
            let idx = (k % 10) * 12 + (k % 12);
            s.likelihood[k * g.cells() + idx] = 60.0;
            s.depth[k * g.cells() + idx] = 0.1 * k as f64;
        }
        let p = decode_latent(
            Execution::Sequential,
            &s,
            &SpreadParams::uniform(NUM_KEYPOINTS, 1.0),
        )
        .unwrap();
        for k in 0..NUM_KEYPOINTS {
            let want = [(k % 12) as f64, (k % 10) as f64, 0.1 * k as f64];
            for (a, b) in p.points[k].iter().zip(want) {
                assert!((a - b).abs() < 1e-9, "{k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn latent_encode_decodes_near_center() {
        let g = grid(40, 40);
        let mut p = integer_pose(g);
        for (k, q) in p.points.iter_mut().enumerate() {
            *q = [
                12.0 + 0.73 * k as f64,
                27.0 - 0.41 * k as f64,
                0.02 * k as f64,
            ];
        }
        let opts = EncodeOptions {
            sigma: 3.0,
            ..Default::default()
        };
        let s = encode_latent(Execution::Sequential, &p, g, &opts).unwrap();
        let d = decode_latent(
            Execution::Parallel,
            &s,
            &SpreadParams::uniform(NUM_KEYPOINTS, 1.0),
        )
        .unwrap();
        for (a, b) in d.points.iter().zip(&p.points) {
            assert!((a[0] - b[0]).abs() < 0.05 && (a[1] - b[1]).abs() < 0.05);
            assert!((a[2] - b[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_zero_upstream() {
        let g = grid(4, 3);
        let mut s = HeatmapStack::zeros(HeatmapKind::Latent, g, 2);
        for (i, v) in s.likelihood.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).cos();
        }
        let beta = SpreadParams(vec![1.5, 0.7]);
        let c = vjp_decode_latent(Execution::Sequential, &s, &beta, &[[0.0; 3]; 2]).unwrap();
        assert!(c
            .likelihood
            .iter()
            .chain(&c.depth)
            .chain(&c.beta)
            .all(|&v| v == 0.0));
        assert!(vjp_decode_latent(Execution::Sequential, &s, &beta, &[[0.0; 3]; 3]).is_err());
    }

    #[test]
    fn vjp_on_constant_map_matches_closed_form() {
        // uniform probabilities: d x̄ / d h_j = β (x_j − x̄) / (H W)
        let g = grid(5, 4);
        let mut s = HeatmapStack::zeros(HeatmapKind::Latent, g, 1);
        s.likelihood.fill(0.3);
        let beta = 1.7;
        let c = vjp_decode_latent(
            Execution::Sequential,
            &s,
            &SpreadParams(vec![beta]),
            &[[1.0, 0.0, 0.0]],
        )
        .unwrap();
        let cx = 2.0;
        for (j, g_j) in c.likelihood.iter().enumerate() {
            let want = beta * (g.coords(j)[0] - cx) / 20.0;
            assert!((g_j - want).abs() < 1e-15);
            // finite-difference cross-check on the same cell
            let eps = 1e-5;
            let mut hp = s.likelihood.clone();
            let mut hm = s.likelihood.clone();
            hp[j] += eps;
            hm[j] -= eps;
            let fp = decode_keypoint(&hp, &s.depth, beta, g)[0];
            let fm = decode_keypoint(&hm, &s.depth, beta, g)[0];
            assert!(((fp - fm) / (2.0 * eps) - want).abs() < 1e-8);
        }
    }
}
