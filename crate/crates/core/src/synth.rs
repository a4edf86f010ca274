//! Seeded synthetic hands for round-trip verification.
//!
//! The articulation model is planar flexion per finger plus a global rigid
//! transform. Each pose is placed so that every keypoint lies inside the
//! configured depth range and projects inside the image with the configured
//! margin; placement solves for the admissible root positions directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::io::PoseRecord;
use crate::pose::{to_25d, NormalizationConfig, Point3, Pose25D, Pose3D};
use crate::skeleton::{finger_joint, BoneStats, NUM_BONES, NUM_KEYPOINTS, ROOT};

#[derive(Debug, Clone, PartialEq)]
pub enum BoneLengths {
    /// Every pose uses exactly these lengths.
    Fixed(BoneStats),
    /// Each bone drawn uniformly from `[min_mm[b], max_mm[b]]`.
    Randomized { min_mm: Vec<f64>, max_mm: Vec<f64> },
}

/// Flexion limits in radians per finger joint (MCP, PIP, DIP), shared by all fingers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulationRanges {
    pub flexion: [(f64, f64); 3],
    /// Sideways spread of each finger about its rest direction.
    pub abduction: (f64, f64),
    /// Largest angle between the palm normal and the viewing direction.
    pub max_tilt: f64,
}

impl Default for ArticulationRanges {
    fn default() -> Self {
        ArticulationRanges {
            flexion: [(-0.2, 1.3), (0.0, 1.5), (0.0, 1.1)],
            abduction: (-0.15, 0.15),
            max_tilt: 60f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub bone_lengths: BoneLengths,
    pub camera: CameraIntrinsics,
    pub depth_range: (f64, f64),
    pub image_size: (usize, usize),
    /// Keep projections at least this far (px) inside the image.
    pub margin_px: f64,
    pub articulation: ArticulationRanges,
    pub normalization: NormalizationConfig,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        let typical = BoneStats::typical_adult();
        SynthConfig {
            seed,
            bone_lengths: BoneLengths::Randomized {
                min_mm: typical.mean_length_mm.iter().map(|m| 0.85 * m).collect(),
                max_mm: typical.mean_length_mm.iter().map(|m| 1.15 * m).collect(),
            },
            camera: CameraIntrinsics {
                fx: 200.0,
                fy: 200.0,
                cx: 63.5,
                cy: 63.5,
                skew: 0.0,
            },
            depth_range: (400.0, 900.0),
            image_size: (128, 128),
            margin_px: 1.0,
            articulation: ArticulationRanges::default(),
            normalization: NormalizationConfig::default(),
        }
    }

    pub fn with_bone_stats(mut self, stats: BoneStats) -> Self {
        self.bone_lengths = BoneLengths::Fixed(stats);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.camera.validate()?;
        let (zmin, zmax) = self.depth_range;
        if !(zmin > 0.0 && zmax > zmin && zmax.is_finite()) {
            return bad(format!("depth range {:?}", self.depth_range));
        }
        let (w, h) = self.image_size;
        if !(self.margin_px >= 0.0 && 2.0 * self.margin_px < (w.min(h) as f64 - 1.0)) {
            return bad(format!("margin {} for image {w}x{h}", self.margin_px));
        }
        match &self.bone_lengths {
            BoneLengths::Fixed(s) => s.validate()?,
            BoneLengths::Randomized { min_mm, max_mm } => {
                if min_mm.len() != NUM_BONES || max_mm.len() != NUM_BONES {
                    return bad("bone ranges need 20 entries".into());
                }
                if min_mm
                    .iter()
                    .zip(max_mm)
                    .any(|(a, b)| !(*a > 0.0 && b >= a && b.is_finite()))
                {
                    return bad("bone ranges must satisfy 0 < min <= max".into());
                }
            }
        }
        let ranges = self
            .articulation
            .flexion
            .iter()
            .chain([&self.articulation.abduction]);
        for &(lo, hi) in ranges {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("angle range ({lo}, {hi})"));
            }
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.articulation.max_tilt) {
            return bad("tilt must be in [0, pi/2)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub pose: Pose3D,
    pub pose25d: Pose25D,
    pub record: PoseRecord,
    /// Normalization scale `s` in mm.
    pub scale: f64,
}

type Mat3 = [[f64; 3]; 3];

fn matvec(m: &Mat3, v: Point3) -> Point3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|i| a[r][i] * b[i][c]).sum();
        }
    }
    m
}

/// Rodrigues rotation about a unit axis.
fn rotation(axis: Point3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Point3, k: f64) -> Point3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// Rest directions of the palm-to-MCP bones, as angles from the middle finger
/// in the palm plane, and how far each finger base dips below the palm.
const BASE_ANGLES: [f64; 5] = [-0.95, -0.26, -0.05, 0.16, 0.37];
const BASE_DIP: [f64; 5] = [0.45, 0.0, 0.0, 0.0, 0.05];

/// Hand in its local frame: root at the origin, fingers along +y, palm normal +z.
fn local_hand(
    lengths: &[f64],
    rng: &mut ChaCha8Rng,
    art: &ArticulationRanges,
) -> [Point3; NUM_KEYPOINTS] {
    let normal = [0.0, 0.0, 1.0];
    let mut pts = [[0.0; 3]; NUM_KEYPOINTS];
    for f in 0..5 {
        let (sa, ca) = BASE_ANGLES[f].sin_cos();
        let (sd, cd) = BASE_DIP[f].sin_cos();
        let base = [sa * cd, ca * cd, -sd];
        let mcp = finger_joint(f, 0);
        pts[mcp] = scale(base, lengths[mcp - 1]);

        let spread = rng.random_range(art.abduction.0..=art.abduction.1);
        let dir = matvec(&rotation(normal, -spread), base);
        // flexion bends the finger towards the palm side (−normal)
        let hinge = {
            let c = [
                dir[1] * normal[2] - dir[2] * normal[1],
                dir[2] * normal[0] - dir[0] * normal[2],
                dir[0] * normal[1] - dir[1] * normal[0],
            ];
            let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            scale(c, 1.0 / n)
        };
        let mut bend = 0.0;
        for j in 1..4 {
            let (lo, hi) = art.flexion[j - 1];
            bend += rng.random_range(lo..=hi);
            let seg = matvec(&rotation(hinge, bend), dir);
            let k = finger_joint(f, j);
            pts[k] = add(pts[k - 1], scale(seg, lengths[k - 1]));
        }
    }
    pts
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Deterministic in `(cfg.seed, index)`.
pub fn gen_pose(cfg: &SynthConfig, index: u64) -> Result<SynthSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let lengths: Vec<f64> = match &cfg.bone_lengths {
        BoneLengths::Fixed(s) => s.mean_length_mm.clone(),
        BoneLengths::Randomized { min_mm, max_mm } => min_mm
            .iter()
            .zip(max_mm)
            .map(|(&lo, &hi)| uniform_in(&mut rng, (lo, hi)))
            .collect(),
    };
    let local = local_hand(&lengths, &mut rng, &cfg.articulation);

    // palm faces the camera: local +y maps to image up, local +z to −Z
    let facing: Mat3 = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let roll = rotation(
        [0.0, 0.0, 1.0],
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    );
    let tilt_axis_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt = rotation(
        [tilt_axis_angle.cos(), tilt_axis_angle.sin(), 0.0],
        rng.random_range(0.0..=cfg.articulation.max_tilt),
    );
    let r = matmul(&tilt, &matmul(&roll, &facing));
    let offsets: Vec<Point3> = local.iter().map(|p| matvec(&r, *p)).collect();

    let (zmin, zmax) = cfg.depth_range;
    let oz_min = offsets.iter().map(|o| o[2]).fold(f64::INFINITY, f64::min);
    let oz_max = offsets
        .iter()
        .map(|o| o[2])
        .fold(f64::NEG_INFINITY, f64::max);
    let z_range = (zmin - oz_min, zmax - oz_max);
    if z_range.0 > z_range.1 {
        return Err(Error::Config("hand does not fit in the depth range".into()));
    }
    let zr = uniform_in(&mut rng, z_range);

    let k = &cfg.camera;
    let (w, h) = cfg.image_size;
    let m = cfg.margin_px;
    let (xlo, xhi) = (m, (w - 1) as f64 - m);
    let (ylo, yhi) = (m, (h - 1) as f64 - m);
    let mut y_range = (f64::NEG_INFINITY, f64::INFINITY);
    for o in &offsets {
        let z = zr + o[2];
        y_range = intersect(
            y_range,
            (
                (ylo - k.cy) * z / k.fy - o[1],
                (yhi - k.cy) * z / k.fy - o[1],
            ),
        );
    }
    if y_range.0 > y_range.1 {
        return Err(Error::Config(
            "hand does not fit vertically in the image".into(),
        ));
    }
    let yr = uniform_in(&mut rng, y_range);
    let mut x_range = (f64::NEG_INFINITY, f64::INFINITY);
    for o in &offsets {
        let z = zr + o[2];
        let y = yr + o[1];
        x_range = intersect(
            x_range,
            (
                ((xlo - k.cx) * z - k.skew * y) / k.fx - o[0],
                ((xhi - k.cx) * z - k.skew * y) / k.fx - o[0],
            ),
        );
    }
    if x_range.0 > x_range.1 {
        return Err(Error::Config(
            "hand does not fit horizontally in the image".into(),
        ));
    }
    let xr = uniform_in(&mut rng, x_range);

    let mut points = [[0.0; 3]; NUM_KEYPOINTS];
    for (p, o) in points.iter_mut().zip(&offsets) {
        *p = add([xr, yr, zr], *o);
    }
    debug_assert_eq!(offsets[ROOT], [0.0; 3]);
    let pose = Pose3D::new(points);
    let pose25d = to_25d(&pose, k, &cfg.normalization)?;
    let scale = crate::pose::normalization_scale(&pose, &cfg.normalization)?;
    let record = PoseRecord::from_parts(Some(&pose), Some(&pose25d), Some(*k))
        .with_frame("synthetic", index);
    Ok(SynthSample {
        pose,
        pose25d,
        record,
        scale,
    })
}

pub fn gen_batch(exec: Execution, cfg: &SynthConfig, count: usize) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    map_range(exec, count, |i| gen_pose(cfg, i as u64))
        .into_iter()
        .collect()
}
