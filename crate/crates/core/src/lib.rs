//! Scale-normalized 2.5D hand pose: representation, exact absolute-depth
//! reconstruction, global scale recovery, direct and latent heatmap codecs
//! with analytic gradients, losses, and evaluation metrics.
//!
//! Batch entry points take an [`Execution`] policy. With the default
//! `parallel` feature they fan out over rayon; output order never depends on
//! the policy.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camera;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod pose;
pub mod reconstruct;
pub mod skeleton;
pub mod synth;

pub use camera::{backproject, crop_transform, project, AffineMap2D, CameraIntrinsics};
pub use error::{Error, Result};
pub use exec::Execution;
pub use heatmap::{HeatmapGrid, HeatmapKind, HeatmapStack, SpreadParams};
pub use pose::{NormalizationConfig, NormalizedPose3D, Pose25D, Pose2D, Pose3D};
pub use reconstruct::{absolute_pose, reconstruct_pose, recover_scale, solve_zroot};
pub use skeleton::{canonical_skeleton, BoneStats, Skeleton, NUM_KEYPOINTS};
