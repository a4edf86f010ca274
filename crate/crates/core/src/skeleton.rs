//! The 21-keypoint hand kinematic tree and bone statistics.
//!
//! Keypoint 0 is the palm (root). Fingers follow thumb, index, middle, ring,
//! pinky, four keypoints each ordered MCP, PIP, DIP, TIP. Bone `k - 1` joins
//! keypoint `k` to its parent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Point3, Pose3D};

pub const NUM_KEYPOINTS: usize = 21;
pub const NUM_BONES: usize = NUM_KEYPOINTS - 1;
pub const ROOT: usize = 0;

pub const FINGERS: [&str; 5] = ["thumb", "index", "middle", "ring", "pinky"];
const JOINTS: [&str; 4] = ["mcp", "pip", "dip", "tip"];

/// Keypoint index of `joint` (0 = MCP .. 3 = TIP) on `finger` (0 = thumb .. 4 = pinky).
pub const fn finger_joint(finger: usize, joint: usize) -> usize {
    1 + 4 * finger + joint
}

pub const INDEX_MCP: usize = finger_joint(1, 0);
pub const FINGERTIPS: [usize; 5] = [4, 8, 12, 16, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bone {
    pub id: usize,
    pub child: usize,
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub num_keypoints: usize,
    pub names: Vec<String>,
    pub parent: Vec<usize>,
    pub bones: Vec<Bone>,
}

impl Default for Skeleton {
    fn default() -> Self {
        canonical_skeleton()
    }
}

pub fn canonical_skeleton() -> Skeleton {
    let mut names = vec!["palm".to_string()];
    let mut parent = vec![ROOT];
    for (f, finger) in FINGERS.iter().enumerate() {
        for (j, joint) in JOINTS.iter().enumerate() {
            names.push(format!("{finger}_{joint}"));
            parent.push(if j == 0 { ROOT } else { finger_joint(f, j - 1) });
        }
    }
    let bones = (1..NUM_KEYPOINTS)
        .map(|child| Bone {
            id: child - 1,
            child,
            parent: parent[child],
        })
        .collect();
    Skeleton {
        num_keypoints: NUM_KEYPOINTS,
        names,
        parent,
        bones,
    }
}

impl Skeleton {
    /// Checks the tree invariants: one self-parented root at 0, every node
    /// reaches it, a bone per non-root node, and the fingertips are leaves.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_keypoints;
        let bad = |m: &str| Err(Error::Config(format!("skeleton: {m}")));
        if n != NUM_KEYPOINTS || self.names.len() != n || self.parent.len() != n {
            return bad("expected 21 keypoints, names and parents");
        }
        if self.parent[ROOT] != ROOT {
            return bad("keypoint 0 must be its own parent");
        }
        for k in 0..n {
            if self.parent[k] >= n {
                return bad("parent index out of range");
            }
            if k != ROOT && self.parent[k] == k {
                return bad("more than one self-parented node");
            }
            if self.depth(k).is_none() {
                return bad("cycle in parent map");
            }
        }
        if self.bones.len() != n - 1 {
            return bad("expected 20 bones");
        }
        for (id, b) in self.bones.iter().enumerate() {
            if b.id != id || b.child >= n || b.parent != self.parent[b.child] || b.child == ROOT {
                return bad("bone list does not match the parent map");
            }
        }
        for &tip in &FINGERTIPS {
            if self
                .parent
                .iter()
                .enumerate()
                .any(|(k, &p)| p == tip && k != tip)
            {
                return bad("fingertip has children");
            }
        }
        Ok(())
    }

    /// Number of parent hops from `k` to the root, `None` on a cycle.
    pub fn depth(&self, k: usize) -> Option<usize> {
        let mut node = k;
        for hops in 0..=self.num_keypoints {
            if node == ROOT {
                return Some(hops);
            }
            node = self.parent[node];
        }
        None
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The bone joining `a` and `b` in either orientation.
    pub fn bone_between(&self, a: usize, b: usize) -> Option<&Bone> {
        self.bones
            .iter()
            .find(|bone| (bone.child, bone.parent) == (a, b) || (bone.child, bone.parent) == (b, a))
    }
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Length of every bone, indexed by bone id. Validity flags are ignored.
pub fn bone_lengths(pose: &Pose3D, skel: &Skeleton) -> Result<Vec<f64>> {
    if pose.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose"));
    }
    Ok(skel
        .bones
        .iter()
        .map(|b| distance(&pose.points[b.child], &pose.points[b.parent]))
        .collect())
}

/// Per-bone mean lengths in mm, indexed by bone id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneStats {
    pub mean_length_mm: Vec<f64>,
}

impl BoneStats {
    pub fn new(mean_length_mm: Vec<f64>) -> Result<Self> {
        let stats = BoneStats { mean_length_mm };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_length_mm.len() != NUM_BONES {
            return Err(Error::Config(format!(
                "bone stats need {NUM_BONES} lengths, got {}",
                self.mean_length_mm.len()
            )));
        }
        if self
            .mean_length_mm
            .iter()
            .any(|&m| !(m.is_finite() && m > 0.0))
        {
            return Err(Error::Config(
                "bone lengths must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, bone_id: usize) -> f64 {
        self.mean_length_mm[bone_id]
    }

    /// Typical adult right-hand bone lengths in mm.
    pub fn typical_adult() -> Self {
        let fingers: [[f64; 4]; 5] = [
            [40.0, 38.0, 32.0, 28.0],
            [80.0, 40.0, 25.0, 22.0],
            [78.0, 45.0, 28.0, 24.0],
            [72.0, 42.0, 27.0, 23.0],
            [68.0, 33.0, 20.0, 20.0],
        ];
        BoneStats {
            mean_length_mm: fingers.iter().flatten().copied().collect(),
        }
    }
}

/// Per-bone arithmetic mean over a sequence of poses. A bone contributes from
/// a pose only when both its endpoints are valid there.
pub fn mean_bone_stats(poses: &[Pose3D], skel: &Skeleton) -> Result<BoneStats> {
    if poses.is_empty() {
        return Err(Error::EmptyInput("pose sequence"));
    }
    let mut sums = vec![0.0; skel.bones.len()];
    let mut counts = vec![0usize; skel.bones.len()];
    for pose in poses {
        let lengths = bone_lengths(pose, skel)?;
        for (b, len) in skel.bones.iter().zip(lengths) {
            if pose.valid[b.child] && pose.valid[b.parent] {
                sums[b.id] += len;
                counts[b.id] += 1;
            }
        }
    }
    if counts.contains(&0) {
        return Err(Error::EmptyInput("bone without any valid observation"));
    }
    let mean_length_mm = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    BoneStats::new(mean_length_mm).map_err(|_| Error::Config("zero-length mean bone".into()))
}

/// Moves each fingertip towards its parent so the last bone is scaled by `factor`.
pub fn shorten_fingertips(pose: &Pose3D, factor: f64, skel: &Skeleton) -> Result<Pose3D> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::BadFactor(factor));
    }
    let mut out = pose.clone();
    if factor == 1.0 {
        return Ok(out);
    }
    for &tip in &FINGERTIPS {
        let p = pose.points[skel.parent[tip]];
        let t = pose.points[tip];
        out.points[tip] = [
            p[0] + factor * (t[0] - p[0]),
            p[1] + factor * (t[1] - p[1]),
            p[2] + factor * (t[2] - p[2]),
        ];
    }
    Ok(out)
}
