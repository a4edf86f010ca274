use hand25d::camera::{backproject, project, CameraIntrinsics};
use hand25d::exec::Execution;
use hand25d::heatmap::{
    decode_latent, encode_latent, softargmax, softmax_map, EncodeOptions, HeatmapGrid,
    HeatmapStack, SpreadParams,
};
use hand25d::metrics::{default_thresholds_3d, evaluate_3d, pck_curve, Protocol};
use hand25d::pose::{to_25d, NormalizationConfig, Pose25D, Pose3D};
use hand25d::skeleton::NUM_KEYPOINTS;
use hand25d::synth::{gen_pose, SynthConfig};
use proptest::prelude::*;

fn synth(seed: u64, index: u64) -> Pose3D {
    gen_pose(&SynthConfig::new(seed), index).unwrap().pose
}

fn camera() -> impl Strategy<Value = CameraIntrinsics> {
    (
        50.0..1500.0f64,
        50.0..1500.0f64,
        -200.0..400.0f64,
        -200.0..400.0f64,
        -5.0..5.0f64,
    )
        .prop_map(|(fx, fy, cx, cy, skew)| CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn to_25d_ignores_global_scale(seed in 0u64..1000, index in 0u64..1000, lambda in 0.05..20.0f64) {
        let pose = synth(seed, index);
        let k = SynthConfig::new(seed).camera;
        let cfg = NormalizationConfig::default();
        let a = to_25d(&pose, &k, &cfg).unwrap();
        let b = to_25d(&pose.scaled(lambda), &k, &cfg).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            for i in 0..3 {
                prop_assert!((p[i] - q[i]).abs() <= 1e-9 * p[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn backproject_inverts_project(
        k in camera(),
        pts in prop::array::uniform21((-500.0..500.0f64, -500.0..500.0f64, 10.0..3000.0f64)),
    ) {
        let pose = Pose3D::new(pts.map(|(x, y, z)| [x, y, z]));
        let (px, depths) = project(&pose, &k).unwrap();
        let back = backproject(&px, &depths, &k).unwrap();
        for (a, b) in back.points.iter().zip(&pose.points) {
            let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let err = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            prop_assert!(err / norm < 1e-9);
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn latent_decode_ignores_per_map_offsets(
        seed in 0u64..500,
        offsets in prop::collection::vec(-100.0..100.0f64, NUM_KEYPOINTS),
        beta in 0.2..5.0f64,
    ) {
        let p25 = to_25d(&synth(seed, 0), &SynthConfig::new(seed).camera, &NormalizationConfig::default()).unwrap();
        let grid = HeatmapGrid::new(128, 128).unwrap();
        let stack = encode_latent(Execution::Sequential, &p25, grid, &EncodeOptions::default()).unwrap();
        let mut shifted: HeatmapStack = stack.clone();
        for (k, chunk) in shifted.likelihood.chunks_mut(grid.cells()).enumerate() {
            for v in chunk {
                *v += offsets[k];
            }
        }
        let beta = SpreadParams::uniform(NUM_KEYPOINTS, beta);
        let a = decode_latent(Execution::Sequential, &stack, &beta).unwrap();
        let b = decode_latent(Execution::Sequential, &shifted, &beta).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            for i in 0..3 {
                prop_assert!((p[i] - q[i]).abs() <= 1e-9);
            }
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softargmax_follows_translated_bumps(
        cx in 14.0..18.0f64,
        cy in 14.0..18.0f64,
        dx in -4i32..=4,
        dy in -4i32..=4,
        beta in 2.0..5.0f64,
    ) {
        let grid = HeatmapGrid::new(32, 32).unwrap();
        let bump = |x0: f64, y0: f64| -> Vec<f64> {
            (0..grid.cells())
                .map(|i| {
                    let [x, y] = grid.coords(i);
                    -((x - x0).powi(2) + (y - y0).powi(2)) / 4.0
                })
                .collect()
        };
        let a = softargmax(&softmax_map(&bump(cx, cy), beta), grid).unwrap();
        let b = softargmax(&softmax_map(&bump(cx + dx as f64, cy + dy as f64), beta), grid).unwrap();
        prop_assert!((b[0] - a[0] - dx as f64).abs() < 1e-6);
        prop_assert!((b[1] - a[1] - dy as f64).abs() < 1e-6);
    }

    #[test]
    fn pck_ignores_error_order(errors in prop::collection::vec(0.0..80.0f64, 1..200), rot in 0usize..200) {
        let t = default_thresholds_3d();
        let mut rotated = errors.clone();
        let r = rot % errors.len();
        rotated.rotate_left(r);
        rotated.reverse();
        prop_assert_eq!(pck_curve(&errors, &t).unwrap(), pck_curve(&rotated, &t).unwrap());
    }

    #[test]
    fn evaluation_ignores_sample_order(seed in 0u64..100, rot in 0usize..20) {
        let gts: Vec<Pose3D> = (0..20).map(|i| synth(seed, i)).collect();
        let preds: Vec<Option<Pose3D>> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| (i % 7 != 3).then(|| g.translated([i as f64, -2.0, 30.0])))
            .collect();
        let t = default_thresholds_3d();
        let a = evaluate_3d(Execution::Sequential, &preds, &gts, Protocol::RootAligned, &t).unwrap();
        let (mut p2, mut g2) = (preds.clone(), gts.clone());
        p2.rotate_left(rot);
        g2.rotate_left(rot);
        let b = evaluate_3d(Execution::Parallel, &p2, &g2, Protocol::AbsoluteWithScale, &t).unwrap();
        let c = evaluate_3d(Execution::Parallel, &p2, &g2, Protocol::RootAligned, &t).unwrap();
        prop_assert_eq!(&a.pck, &c.pck);
        prop_assert!((a.auc - c.auc).abs() < 1e-12);
        prop_assert!(b.auc <= 1.0);
    }
}

#[test]
fn batch_reconstruction_matches_sequential() {
    let cfg = SynthConfig::new(9);
    let poses: Vec<Pose25D> = (0..64)
        .map(|i| gen_pose(&cfg, i).unwrap().pose25d)
        .collect();
    let norm = NormalizationConfig::default();
    let seq =
        hand25d::reconstruct::reconstruct_batch(Execution::Sequential, &poses, &cfg.camera, &norm);
    let par =
        hand25d::reconstruct::reconstruct_batch(Execution::Parallel, &poses, &cfg.camera, &norm);
    assert_eq!(seq.len(), par.len());
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
    }
}
