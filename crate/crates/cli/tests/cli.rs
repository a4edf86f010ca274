use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hand25d"))
        .args(args)
        .output()
        .expect("spawn hand25d")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Bone stats taken from a small synthetic set, so `synth --bone-stats` and
/// `reconstruct --bone-stats` agree exactly.
fn stats(dir: &TempDir) -> PathBuf {
    let sample = p(dir, "sample.jsonl");
    let stats = p(dir, "stats.json");
    ok(&["synth", "--seed", "9", "--count", "20", "--out", s(&sample)]);
    ok(&["bone-stats", "--in", s(&sample), "--out", s(&stats)]);
    stats
}

#[test]
fn synth_normalize_reconstruct_eval_is_lossless() {
    let dir = TempDir::new().unwrap();
    let stats = stats(&dir);
    let (gt, p25, rec, report, curve) = (
        p(&dir, "gt.jsonl"),
        p(&dir, "p25.jsonl"),
        p(&dir, "rec.jsonl"),
        p(&dir, "report.json"),
        p(&dir, "curve.csv"),
    );
    ok(&[
        "synth",
        "--seed",
        "1",
        "--count",
        "1000",
        "--bone-stats",
        s(&stats),
        "--out",
        s(&gt),
    ]);
    ok(&[
        "normalize",
        "--in",
        s(&gt),
        "--pair",
        "index_mcp:palm",
        "--c",
        "1.0",
        "--out",
        s(&p25),
    ]);
    ok(&[
        "reconstruct",
        "--in",
        s(&p25),
        "--bone-stats",
        s(&stats),
        "--strict",
        "--out",
        s(&rec),
    ]);
    ok(&[
        "eval",
        "--pred",
        s(&rec),
        "--gt",
        s(&gt),
        "--protocol",
        "absolute_with_scale",
        "--space",
        "3d",
        "--out",
        s(&report),
    ]);
    let r = json(&report);
    assert_eq!(r["auc"], 1.0);
    assert_eq!(r["num_samples"], 1000);
    assert!(r["pck"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["fraction"] == 1.0));

    ok(&["pck-curve", "--report", s(&report), "--out", s(&curve)]);
    let csv = std::fs::read_to_string(&curve).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,fraction"));
    assert_eq!(lines.next(), Some("20,1"));
    assert_eq!(lines.count(), 30);
}

#[test]
fn normalized_reconstruction_needs_bone_stats_for_3d_eval() {
    let dir = TempDir::new().unwrap();
    let (gt, p25, rec) = (
        p(&dir, "gt.jsonl"),
        p(&dir, "p25.jsonl"),
        p(&dir, "rec.jsonl"),
    );
    ok(&["synth", "--seed", "2", "--count", "10", "--out", s(&gt)]);
    ok(&["normalize", "--in", s(&gt), "--out", s(&p25)]);
    ok(&["reconstruct", "--in", s(&p25), "--out", s(&rec)]);
    let out = run(&[
        "eval",
        "--pred",
        s(&rec),
        "--gt",
        s(&gt),
        "--out",
        s(&p(&dir, "r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn direct_heatmaps_decode_within_half_a_pixel_diagonal() {
    let dir = TempDir::new().unwrap();
    let (gt, p25, maps, dec, report) = (
        p(&dir, "gt.jsonl"),
        p(&dir, "p25.jsonl"),
        p(&dir, "maps.h25d"),
        p(&dir, "dec.jsonl"),
        p(&dir, "report.json"),
    );
    ok(&["synth", "--seed", "3", "--count", "20", "--out", s(&gt)]);
    ok(&["normalize", "--in", s(&gt), "--out", s(&p25)]);
    ok(&[
        "encode",
        "--in",
        s(&p25),
        "--grid",
        "128x128",
        "--sigma",
        "5",
        "--kind",
        "direct",
        "--out",
        s(&maps),
    ]);
    assert_eq!(
        std::fs::metadata(&maps).unwrap().len(),
        20 * (24 + 4 * 2 * 21 * 128 * 128)
    );
    ok(&[
        "decode",
        "--in",
        s(&maps),
        "--kind",
        "direct",
        "--out",
        s(&dec),
    ]);
    ok(&[
        "eval",
        "--pred",
        s(&dec),
        "--gt",
        s(&p25),
        "--space",
        "2d",
        "--out",
        s(&report),
    ]);
    let r = json(&report);
    let worst = r["per_keypoint_errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e.as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(worst <= 0.5 * 2f64.sqrt(), "worst {worst}");
    assert_eq!(r["per_keypoint_errors"].as_array().unwrap().len(), 20 * 21);

    let wrong = run(&[
        "decode",
        "--in",
        s(&maps),
        "--kind",
        "latent",
        "--out",
        s(&dec),
    ]);
    assert_eq!(wrong.status.code(), Some(3));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&[
        "synth", "--seed", "1", "--count", "2", "--out", "x.jsonl", "--bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unsolvable_record_fails_only_under_strict() {
    let dir = TempDir::new().unwrap();
    let (gt, p25, bad) = (
        p(&dir, "gt.jsonl"),
        p(&dir, "p25.jsonl"),
        p(&dir, "bad.jsonl"),
    );
    ok(&["synth", "--seed", "4", "--count", "3", "--out", s(&gt)]);
    ok(&["normalize", "--in", s(&gt), "--out", s(&p25)]);
    // the index MCP sits two units deeper than the palm: no root depth
    // can keep their distance at C = 1
    let text = std::fs::read_to_string(&p25).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[1]).unwrap();
    rec["keypoints"][5]["zr_norm"] = 2.0.into();
    lines[1] = rec.to_string();
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let out_path = p(&dir, "rec.jsonl");
    let strict = run(&[
        "reconstruct",
        "--in",
        s(&bad),
        "--strict",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(strict.status.code(), Some(4));

    ok(&["reconstruct", "--in", s(&bad), "--out", s(&out_path)]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    let recs: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 3);
    assert!(recs[1]["keypoints"]
        .as_array()
        .unwrap()
        .iter()
        .all(|k| k["valid"] == false));
    assert!(recs[0]["keypoints"]
        .as_array()
        .unwrap()
        .iter()
        .all(|k| k["valid"] == true));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let junk = p(&dir, "junk.jsonl");
    std::fs::write(&junk, "{\"schema_version\": 1, \"keypoints\": []}\n").unwrap();
    let out = run(&[
        "normalize",
        "--in",
        s(&junk),
        "--out",
        s(&p(&dir, "o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let nan = p(&dir, "nan.json");
    std::fs::write(&nan, "{\"fx\": NaN, \"fy\": 1, \"cx\": 0, \"cy\": 0}").unwrap();
    let out = run(&[
        "synth",
        "--seed",
        "1",
        "--count",
        "1",
        "--camera",
        s(&nan),
        "--out",
        s(&junk),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"));
    ok(&["synth", "--seed", "5", "--count", "50", "--out", s(&a)]);
    ok(&[
        "--sequential",
        "synth",
        "--seed",
        "5",
        "--count",
        "50",
        "--out",
        s(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let (ra, rb) = (p(&dir, "ra.json"), p(&dir, "rb.json"));
    ok(&["eval", "--pred", s(&a), "--gt", s(&b), "--out", s(&ra)]);
    ok(&[
        "--sequential",
        "eval",
        "--pred",
        s(&a),
        "--gt",
        s(&b),
        "--out",
        s(&rb),
    ]);
    assert_eq!(std::fs::read(&ra).unwrap(), std::fs::read(&rb).unwrap());
}

#[test]
fn gradcheck_reports_status_through_exit_code() {
    let dir = TempDir::new().unwrap();
    let report = p(&dir, "g.json");
    ok(&[
        "gradcheck",
        "--op",
        "decode_latent",
        "--seeds",
        "10",
        "--eps",
        "1e-4",
        "--out",
        s(&report),
    ]);
    assert_eq!(json(&report)["status"], "pass");

    let out = run(&[
        "gradcheck",
        "--op",
        "softargmax",
        "--seeds",
        "10",
        "--eps",
        "1e-12",
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&report)["status"], "fd_breakdown");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    let out = run(&["gradcheck", "--op", "conv2d"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn shortened_tips_are_reprojected() {
    let dir = TempDir::new().unwrap();
    let (gt, fixed) = (p(&dir, "gt.jsonl"), p(&dir, "fixed.jsonl"));
    ok(&["synth", "--seed", "6", "--count", "5", "--out", s(&gt)]);
    ok(&[
        "shorten-tips",
        "--in",
        s(&gt),
        "--factor",
        "0.9",
        "--out",
        s(&fixed),
    ]);
    let before: Vec<Value> = std::fs::read_to_string(&gt)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let after: Vec<Value> = std::fs::read_to_string(&fixed)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for (b, a) in before.iter().zip(&after) {
        for k in 0..21 {
            let (kb, ka) = (&b["keypoints"][k], &a["keypoints"][k]);
            assert!(ka.get("zr_norm").is_none());
            let tip = [4, 8, 12, 16, 20].contains(&k);
            assert_eq!(kb["xyz_mm"] == ka["xyz_mm"], !tip);
            assert_eq!(kb["px"] == ka["px"], !tip);
        }
    }
    let out = run(&[
        "shorten-tips",
        "--in",
        s(&gt),
        "--factor",
        "0",
        "--out",
        s(&fixed),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
