//! File formats: pose records as JSON lines, small JSON documents (camera,
//! bone stats, spread values, reports) and the H25D binary heatmap container.
//!
//! H25D layout, all little-endian: magic `H25D`, `u32` version (1), `u32` K,
//! `u32` H, `u32` W, `u8` kind (0 direct, 1 latent), three pad bytes, then
//! `K·H·W` `f32` likelihoods and `K·H·W` `f32` depths, row-major. A file may
//! hold several containers back to back.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::heatmap::{HeatmapGrid, HeatmapKind, HeatmapStack};
use crate::pose::{Pose25D, Pose2D, Pose3D};
use crate::skeleton::{canonical_skeleton, NUM_KEYPOINTS, ROOT};

pub const SCHEMA_VERSION: u32 = 1;
pub const H25D_MAGIC: &[u8; 4] = b"H25D";
pub const H25D_VERSION: u32 = 1;
const H25D_HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    #[default]
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRecord {
    pub id: usize,
    pub name: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz_mm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zr_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u64>,
    /// `"normalized"` when `xyz_mm` holds a scale-normalized pose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz_units: Option<String>,
    /// Mirror axis for left-hand pixel coordinates; defaults to the camera `cx`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_center_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub schema_version: u32,
    #[serde(default)]
    pub side: Side,
    pub keypoints: Vec<KeypointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraIntrinsics>,
    #[serde(default)]
    pub meta: RecordMeta,
}

fn all_finite(vals: &[f64]) -> bool {
    vals.iter().all(|v| v.is_finite())
}

impl PoseRecord {
    /// Record with all keypoints present but no coordinates.
    pub fn empty() -> Self {
        let skel = canonical_skeleton();
        PoseRecord {
            schema_version: SCHEMA_VERSION,
            side: Side::Right,
            keypoints: (0..NUM_KEYPOINTS)
                .map(|id| KeypointRecord {
                    id,
                    name: skel.names[id].clone(),
                    valid: true,
                    px: None,
                    xyz_mm: None,
                    zr_norm: None,
                })
                .collect(),
            camera: None,
            meta: RecordMeta::default(),
        }
    }

    /// Builds a record from whichever views are available. Validity comes from
    /// the 3D pose when given, otherwise from the 2.5D pose.
    pub fn from_parts(
        pose: Option<&Pose3D>,
        p25: Option<&Pose25D>,
        camera: Option<CameraIntrinsics>,
    ) -> Self {
        let mut rec = PoseRecord::empty();
        rec.camera = camera;
        for (k, kp) in rec.keypoints.iter_mut().enumerate() {
            kp.valid = pose
                .map(|p| p.valid[k])
                .or(p25.map(|p| p.valid[k]))
                .unwrap_or(true);
            if !kp.valid {
                continue;
            }
            if let Some(p) = pose {
                kp.xyz_mm = Some(p.points[k]);
            }
            if let Some(p) = p25 {
                kp.px = Some([p.points[k][0], p.points[k][1]]);
                kp.zr_norm = Some(p.points[k][2]);
            }
        }
        rec
    }

    pub fn with_frame(mut self, dataset: &str, frame: u64) -> Self {
        self.meta.dataset = Some(dataset.to_string());
        self.meta.frame = Some(frame);
        self
    }

    /// Checks ids, names, finiteness, and that valid keypoints carry pixels.
    /// Keypoints are put in id order.
    pub fn validate(&mut self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        if self.keypoints.len() != NUM_KEYPOINTS {
            return bad(format!(
                "expected {NUM_KEYPOINTS} keypoints, got {}",
                self.keypoints.len()
            ));
        }
        self.keypoints.sort_by_key(|k| k.id);
        let skel = canonical_skeleton();
        for (i, kp) in self.keypoints.iter().enumerate() {
            if kp.id != i {
                return bad(format!(
                    "keypoint ids must be 0..20 exactly once (found {} at {i})",
                    kp.id
                ));
            }
            if kp.name != skel.names[i] {
                return bad(format!(
                    "keypoint {i} is named `{}`, expected `{}`",
                    kp.name, skel.names[i]
                ));
            }
            let finite = kp.px.is_none_or(|p| all_finite(&p))
                && kp.xyz_mm.is_none_or(|p| all_finite(&p))
                && kp.zr_norm.is_none_or(f64::is_finite);
            if !finite {
                return Err(Error::NonFinite("pose record"));
            }
            if kp.valid && kp.px.is_none() && kp.xyz_mm.is_none() {
                return bad(format!("valid keypoint {i} has no coordinates"));
            }
        }
        if let Some(c) = &self.camera {
            c.validate()?;
        }
        Ok(())
    }

    pub fn validity(&self) -> [bool; NUM_KEYPOINTS] {
        std::array::from_fn(|k| self.keypoints[k].valid)
    }

    pub fn pose3d(&self) -> Result<Pose3D> {
        let mut pose = Pose3D::new([[0.0; 3]; NUM_KEYPOINTS]);
        pose.valid = self.validity();
        for (k, kp) in self.keypoints.iter().enumerate() {
            match kp.xyz_mm {
                Some(p) => pose.points[k] = p,
                None if kp.valid => {
                    return Err(Error::Format(format!("keypoint {k} has no xyz_mm")));
                }
                None => {}
            }
        }
        Ok(pose)
    }

    pub fn pose2d(&self) -> Result<Pose2D> {
        let mut pose = Pose2D::new([[0.0; 2]; NUM_KEYPOINTS]);
        pose.valid = self.validity();
        for (k, kp) in self.keypoints.iter().enumerate() {
            match kp.px {
                Some(p) => pose.points[k] = p,
                None if kp.valid => return Err(Error::Format(format!("keypoint {k} has no px"))),
                None => {}
            }
        }
        Ok(pose)
    }

    pub fn pose25d(&self) -> Result<Pose25D> {
        let p2 = self.pose2d()?;
        let mut pose = Pose25D::new([[0.0; 3]; NUM_KEYPOINTS]);
        pose.valid = p2.valid;
        pose.root = ROOT;
        for (k, kp) in self.keypoints.iter().enumerate() {
            let z = match kp.zr_norm {
                Some(z) => z,
                None if kp.valid => {
                    return Err(Error::Format(format!("keypoint {k} has no zr_norm")))
                }
                None => 0.0,
            };
            pose.points[k] = [p2.points[k][0], p2.points[k][1], z];
        }
        Ok(pose)
    }

    /// Mirrors a left-hand record into the right-hand convention: pixel x
    /// about the crop center (or the camera `cx`), 3D X about the optical axis.
    pub fn to_right_hand(mut self) -> Result<Self> {
        if self.side == Side::Right {
            return Ok(self);
        }
        let axis = self.meta.crop_center_x.or(self.camera.map(|c| c.cx));
        for kp in self.keypoints.iter_mut() {
            if let Some(p) = kp.px.as_mut() {
                let cx = axis.ok_or_else(|| {
                    Error::Format(
                        "left-hand record needs crop_center_x or a camera to mirror".into(),
                    )
                })?;
                p[0] = 2.0 * cx - p[0];
            }
            if let Some(p) = kp.xyz_mm.as_mut() {
                p[0] = -p[0];
            }
        }
        if let Some(c) = self.camera.as_mut() {
            c.skew = -c.skew;
        }
        self.side = Side::Right;
        Ok(self)
    }
}

/// Parses one JSON line into a validated right-hand record.
pub fn parse_record(line: &str) -> Result<PoseRecord> {
    let mut rec: PoseRecord = serde_json::from_str(line)?;
    rec.validate()?;
    rec.to_right_hand()
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("line {}: {m}", n + 1)),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[PoseRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl_file(path: &Path) -> Result<Vec<PoseRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_jsonl(std::io::BufReader::new(f))
}

pub fn write_jsonl_file(path: &Path, records: &[PoseRecord]) -> Result<()> {
    let f =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_jsonl(std::io::BufWriter::new(f), records)
}

/// Reads a JSON document. Non-finite numbers cannot be represented in JSON,
/// so anything that parses is finite.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_h25d<W: Write>(mut w: W, stack: &HeatmapStack) -> Result<()> {
    stack.validate()?;
    let dims = [stack.num_keypoints, stack.grid.height, stack.grid.width];
    w.write_all(H25D_MAGIC)?;
    w.write_all(&H25D_VERSION.to_le_bytes())?;
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let kind = match stack.kind {
        HeatmapKind::Direct => 0u8,
        HeatmapKind::Latent => 1u8,
    };
    w.write_all(&[kind, 0, 0, 0])?;
    let mut buf = Vec::with_capacity(4 * (stack.likelihood.len() + stack.depth.len()));
    for v in stack.likelihood.iter().chain(&stack.depth) {
        let f = *v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite("heatmap value out of f32 range"));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads the next container, or `None` at a clean end of input.
pub fn read_h25d<R: Read>(mut r: R) -> Result<Option<HeatmapStack>> {
    let mut header = [0u8; H25D_HEADER_LEN];
    let mut got = 0;
    while got < header.len() {
        let n = r.read(&mut header[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got == 0 {
        return Ok(None);
    }
    if got < header.len() {
        return Err(Error::Format("truncated H25D header".into()));
    }
    if &header[0..4] != H25D_MAGIC {
        return Err(Error::Format("bad H25D magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != H25D_VERSION {
        return Err(Error::Format(format!(
            "unsupported H25D version {}",
            word(4)
        )));
    }
    let (k, h, w) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let kind = match header[20] {
        0 => HeatmapKind::Direct,
        1 => HeatmapKind::Latent,
        other => return Err(Error::Format(format!("unknown heatmap kind {other}"))),
    };
    let grid = HeatmapGrid::new(w, h).map_err(|e| Error::Format(e.to_string()))?;
    let n = k
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format("H25D dimensions overflow".into()))?;
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated H25D payload".into()))?;
    let mut vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let likelihood: Vec<f64> = vals.by_ref().take(n).collect();
    let depth: Vec<f64> = vals.collect();
    let stack = HeatmapStack {
        kind,
        grid,
        num_keypoints: k,
        likelihood,
        depth,
    };
    stack.validate()?;
    Ok(Some(stack))
}

pub fn read_h25d_all<R: Read>(mut r: R) -> Result<Vec<HeatmapStack>> {
    let mut out = Vec::new();
    while let Some(s) = read_h25d(&mut r)? {
        out.push(s);
    }
    Ok(out)
}
