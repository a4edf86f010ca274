use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hand25d::camera::project;
use hand25d::exec::{map_slice, Execution};
use hand25d::gradcheck::{gradcheck, GradTarget, GradcheckConfig, GradcheckStatus};
use hand25d::heatmap::{
    decode_direct, decode_latent, encode_direct, encode_latent, EncodeOptions, Exponent,
    HeatmapGrid, HeatmapKind, OutOfGrid, SpreadParams,
};
use hand25d::io::{read_h25d, read_jsonl, write_h25d, write_jsonl, PoseRecord};
use hand25d::metrics::{
    default_thresholds_2d, default_thresholds_3d, evaluate_2d, evaluate_3d, linspace, EvalReport,
    Protocol,
};
use hand25d::pose::{to_25d, NormalizationConfig, Pose2D, Pose3D};
use hand25d::reconstruct::{absolute_pose, reconstruct_pose, recover_scale};
use hand25d::skeleton::{
    canonical_skeleton, mean_bone_stats, shorten_fingertips, BoneStats, FINGERTIPS,
};
use hand25d::synth::{gen_batch, SynthConfig};
use hand25d::{CameraIntrinsics, Error};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{
    BoneStatsArgs, Cli, Command, DecodeArgs, EncodeArgs, EvalArgs, ExponentArg, GradcheckArgs,
    Kind, NormalizeArgs, OutOfGridArg, PairArgs, PckCurveArgs, ProtocolArg, ReconstructArgs,
    ShortenTipsArgs, SpaceArg, SynthArgs,
};

const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn numerical(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_NUMERICAL,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            numerical(e.to_string())
        } else {
            data(e.to_string())
        }
    }
}

impl Failure {
    fn prefixed(self, what: &str) -> Failure {
        Failure {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> Outcome {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Synth(a) => synth(exec, a),
        Command::Normalize(a) => normalize(exec, a),
        Command::Reconstruct(a) => reconstruct(exec, a),
        Command::Encode(a) => encode(exec, a),
        Command::Decode(a) => decode(exec, a),
        Command::Eval(a) => eval(exec, a),
        Command::PckCurve(a) => pck_curve(a),
        Command::Gradcheck(a) => grad(exec, a),
        Command::ShortenTips(a) => shorten_tips(a),
        Command::BoneStats(a) => bone_stats(a),
    }
}

fn open_in(path: &Path) -> Outcome<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_out(path: &Path) -> Outcome<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::from(e).prefixed(&path.display().to_string())
}

fn read_records(path: &Path) -> Outcome<Vec<PoseRecord>> {
    read_jsonl(open_in(path)?).map_err(context(path))
}

fn write_records(path: &Path, records: &[PoseRecord]) -> Outcome {
    write_jsonl(open_out(path)?, records).map_err(context(path))
}

fn read_json_file<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let mut text = String::new();
    open_in(path)?
        .read_to_string(&mut text)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut w = open_out(path)?;
    let io_err = |e: io::Error| data(format!("{}: {e}", path.display()));
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn load_camera(path: &Path) -> Outcome<CameraIntrinsics> {
    let k: CameraIntrinsics = read_json_file(path)?;
    k.validate().map_err(context(path))?;
    Ok(k)
}

fn load_bone_stats(path: &Path) -> Outcome<BoneStats> {
    let s: BoneStats = read_json_file(path)?;
    s.validate().map_err(context(path))?;
    Ok(s)
}

fn record_camera(
    rec: &PoseRecord,
    over: Option<CameraIntrinsics>,
    line: usize,
) -> Outcome<CameraIntrinsics> {
    over.or(rec.camera)
        .ok_or_else(|| data(format!("record {line} has no camera; pass --camera")))
}

fn norm_config(a: &PairArgs) -> Outcome<NormalizationConfig> {
    let skel = canonical_skeleton();
    let (n, m) = a
        .pair
        .split_once(':')
        .ok_or_else(|| data(format!("pair `{}` is not `name:name`", a.pair)))?;
    let index = |name: &str| {
        skel.index_of(name)
            .ok_or_else(|| data(format!("unknown keypoint `{name}`")))
    };
    let cfg = NormalizationConfig {
        c: a.c,
        pair: (index(n)?, index(m)?),
    };
    cfg.validate(&skel)?;
    Ok(cfg)
}

/// Keeps dataset and frame; everything else is rebuilt by the caller.
fn carry_meta(from: &PoseRecord, mut to: PoseRecord) -> PoseRecord {
    to.meta.dataset = from.meta.dataset.clone();
    to.meta.frame = from.meta.frame;
    to
}

fn synth(exec: Execution, a: SynthArgs) -> Outcome {
    let mut cfg = SynthConfig::new(a.seed);
    if let Some(p) = &a.bone_stats {
        cfg = cfg.with_bone_stats(load_bone_stats(p)?);
    }
    if let Some(p) = &a.camera {
        cfg.camera = load_camera(p)?;
    }
    let samples = gen_batch(exec, &cfg, a.count)?;
    let records: Vec<PoseRecord> = samples.into_iter().map(|s| s.record).collect();
    write_records(&a.out, &records)
}

fn normalize(exec: Execution, a: NormalizeArgs) -> Outcome {
    let cfg = norm_config(&a.pair)?;
    let over = a.camera.as_deref().map(load_camera).transpose()?;
    let records = read_records(&a.input)?;
    let indexed: Vec<(usize, &PoseRecord)> = records.iter().enumerate().collect();
    let out: Vec<Outcome<PoseRecord>> = map_slice(exec, &indexed, |&(i, rec)| {
        let k = record_camera(rec, over, i)?;
        let at = |e: Error| Failure::from(e).prefixed(&format!("record {i}"));
        let pose = rec.pose3d().map_err(at)?;
        let p25 = to_25d(&pose, &k, &cfg).map_err(at)?;
        Ok(carry_meta(
            rec,
            PoseRecord::from_parts(None, Some(&p25), Some(k)),
        ))
    });
    let out = out.into_iter().collect::<Outcome<Vec<_>>>()?;
    write_records(&a.out, &out)
}

fn reconstruct(exec: Execution, a: ReconstructArgs) -> Outcome {
    let cfg = norm_config(&a.pair)?;
    let over = a.camera.as_deref().map(load_camera).transpose()?;
    let stats = a.bone_stats.as_deref().map(load_bone_stats).transpose()?;
    let skel = canonical_skeleton();
    let records = read_records(&a.input)?;
    let indexed: Vec<(usize, &PoseRecord)> = records.iter().enumerate().collect();

    let solved: Vec<Outcome<std::result::Result<PoseRecord, Error>>> =
        map_slice(exec, &indexed, |&(i, rec)| {
            let k = record_camera(rec, over, i)?;
            let p25 = rec.pose25d().map_err(context(&a.input))?;
            let result = reconstruct_pose(&p25, &k, &cfg).and_then(|np| match &stats {
                Some(s) => {
                    let scale = recover_scale(&np, s, &skel)?;
                    Ok((absolute_pose(&np, scale)?, "mm"))
                }
                None => Ok((np.pose, "normalized")),
            });
            Ok(result.map(|(pose, units)| {
                let mut out = carry_meta(rec, PoseRecord::from_parts(Some(&pose), None, Some(k)));
                if let Ok((px, _)) = project(&pose, &k) {
                    for (kp, p) in out.keypoints.iter_mut().zip(px.points) {
                        if kp.valid {
                            kp.px = Some(p);
                        }
                    }
                }
                out.meta.xyz_units = Some(units.to_string());
                out
            }))
        });

    let mut out = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for (i, (rec, r)) in records.iter().zip(solved).enumerate() {
        match r? {
            Ok(o) => out.push(o),
            Err(e) if e.is_numerical() => {
                failures.push(format!("record {i}: {e}"));
                let mut failed = carry_meta(rec, PoseRecord::empty());
                for kp in failed.keypoints.iter_mut() {
                    kp.valid = false;
                }
                out.push(failed);
            }
            Err(e) => return Err(data(format!("record {i}: {e}"))),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("hand25d: {f}");
        }
        if a.strict {
            return Err(numerical(format!(
                "{} of {} records could not be reconstructed",
                failures.len(),
                records.len()
            )));
        }
        eprintln!(
            "hand25d: wrote {} unsolved records with all keypoints invalid",
            failures.len()
        );
    }
    write_records(&a.out, &out)
}

fn parse_grid(s: &str) -> Outcome<HeatmapGrid> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| data(format!("grid `{s}` is not `WxH`")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| data(format!("grid `{s}` is not `WxH`")))
    };
    Ok(HeatmapGrid::new(parse(w)?, parse(h)?)?)
}

fn encode(exec: Execution, a: EncodeArgs) -> Outcome {
    let grid = parse_grid(&a.grid)?;
    let opts = EncodeOptions {
        sigma: a.sigma,
        exponent: match a.exponent {
            ExponentArg::L1 => Exponent::L1,
            ExponentArg::L2sq => Exponent::L2Sq,
        },
        out_of_grid: match a.out_of_grid {
            OutOfGridArg::Error => OutOfGrid::Error,
            OutOfGridArg::Clamp => OutOfGrid::Clamp,
        },
    };
    let records = read_records(&a.input)?;
    let mut w = open_out(&a.out)?;
    for (i, rec) in records.iter().enumerate() {
        let p25 = rec.pose25d().map_err(context(&a.input))?;
        let stack = match a.kind {
            Kind::Direct => encode_direct(exec, &p25, grid, &opts),
            Kind::Latent => encode_latent(exec, &p25, grid, &opts),
        }
        .map_err(|e| data(format!("record {i}: {e}")))?;
        write_h25d(&mut w, &stack).map_err(context(&a.out))?;
    }
    w.flush()
        .map_err(|e| data(format!("{}: {e}", a.out.display())))
}

fn decode(exec: Execution, a: DecodeArgs) -> Outcome {
    let beta = match &a.beta {
        Some(p) => {
            let b: SpreadParams = read_json_file(p)?;
            b.validate(hand25d::NUM_KEYPOINTS).map_err(context(p))?;
            Some(b)
        }
        None => None,
    };
    let camera = a.camera.as_deref().map(load_camera).transpose()?;
    let mut input = open_in(&a.input)?;
    let want = a.kind.map(|k| match k {
        Kind::Direct => HeatmapKind::Direct,
        Kind::Latent => HeatmapKind::Latent,
    });
    let default_beta = SpreadParams::uniform(hand25d::NUM_KEYPOINTS, 1.0);
    let mut out = Vec::new();
    // one stack in memory at a time; full-size stacks are several MB each
    while let Some(stack) = read_h25d(&mut input).map_err(context(&a.input))? {
        let (i, stack) = (out.len(), &stack);
        if want.is_some_and(|k| k != stack.kind) {
            return Err(data(format!(
                "stack {i} is {:?}, expected {:?}",
                stack.kind,
                want.unwrap()
            )));
        }
        let p25 = match stack.kind {
            HeatmapKind::Direct => decode_direct(stack),
            HeatmapKind::Latent => {
                decode_latent(exec, stack, beta.as_ref().unwrap_or(&default_beta))
            }
        }
        .map_err(|e| data(format!("stack {i}: {e}")))?;
        out.push(PoseRecord::from_parts(None, Some(&p25), camera).with_frame("decoded", i as u64));
    }
    write_records(&a.out, &out)
}

fn parse_thresholds(s: &str) -> Outcome<Vec<f64>> {
    let bad = || data(format!("thresholds `{s}` are not `start:stop:count`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(bad());
    };
    let start: f64 = start.trim().parse().map_err(|_| bad())?;
    let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if !(start.is_finite() && stop.is_finite() && stop > start && count >= 2) {
        return Err(bad());
    }
    Ok(linspace(start, stop, count))
}

fn any_valid(rec: &PoseRecord) -> bool {
    rec.keypoints.iter().any(|k| k.valid)
}

fn eval(exec: Execution, a: EvalArgs) -> Outcome {
    let preds = read_records(&a.pred)?;
    let gts = read_records(&a.gt)?;
    if preds.len() != gts.len() {
        return Err(data(format!(
            "{} predictions for {} ground-truth records",
            preds.len(),
            gts.len()
        )));
    }
    let report: EvalReport = match a.space {
        SpaceArg::ThreeD => {
            if let Some(i) = preds
                .iter()
                .position(|r| r.meta.xyz_units.as_deref() == Some("normalized"))
            {
                return Err(data(format!(
                    "prediction {i} is scale-normalized; reconstruct with --bone-stats first"
                )));
            }
            let thresholds = match &a.thresholds {
                Some(t) => parse_thresholds(t)?,
                None => default_thresholds_3d(),
            };
            let p: Vec<Option<Pose3D>> = preds
                .iter()
                .map(|r| any_valid(r).then(|| r.pose3d()).transpose())
                .collect::<Result<_, _>>()
                .map_err(context(&a.pred))?;
            let g: Vec<Pose3D> = gts
                .iter()
                .map(|r| r.pose3d())
                .collect::<Result<_, _>>()
                .map_err(context(&a.gt))?;
            let protocol = match a.protocol {
                ProtocolArg::RootAligned => Protocol::RootAligned,
                ProtocolArg::AbsoluteWithScale => Protocol::AbsoluteWithScale,
            };
            evaluate_3d(exec, &p, &g, protocol, &thresholds)?
        }
        SpaceArg::TwoD => {
            let thresholds = match &a.thresholds {
                Some(t) => parse_thresholds(t)?,
                None if a.head_length.is_some() => linspace(0.0, 1.0, 21),
                None => default_thresholds_2d(),
            };
            let p: Vec<Option<Pose2D>> = preds
                .iter()
                .map(|r| any_valid(r).then(|| r.pose2d()).transpose())
                .collect::<Result<_, _>>()
                .map_err(context(&a.pred))?;
            let g: Vec<Pose2D> = gts
                .iter()
                .map(|r| r.pose2d())
                .collect::<Result<_, _>>()
                .map_err(context(&a.gt))?;
            evaluate_2d(exec, &p, &g, a.head_length, &thresholds)?
        }
    };
    write_json_file(&a.out, &report)
}

fn pck_curve(a: PckCurveArgs) -> Outcome {
    let report: EvalReport = read_json_file(&a.report)?;
    let mut w = open_out(&a.out)?;
    let io_err = |e: io::Error| data(format!("{}: {e}", a.out.display()));
    writeln!(w, "threshold,fraction").map_err(io_err)?;
    for p in &report.pck {
        writeln!(w, "{},{}", p.threshold, p.fraction).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn grad(exec: Execution, a: GradcheckArgs) -> Outcome {
    let target: GradTarget = a.op.parse()?;
    let mut cfg = GradcheckConfig::new(target);
    cfg.seeds = a.seeds;
    cfg.first_seed = a.first_seed;
    cfg.eps = a.eps;
    cfg.tolerance = a.tolerance;
    cfg.zero_upstream = a.zero_upstream;
    let report = gradcheck(exec, &cfg)?;
    match &a.out {
        Some(p) => write_json_file(p, &report)?,
        None => write_json_file(Path::new("-"), &report)?,
    }
    match report.status {
        GradcheckStatus::Pass => Ok(()),
        GradcheckStatus::FdBreakdown => {
            eprintln!(
                "hand25d: warning: {} mismatches at eps {:e} are finite-difference breakdown, not gradient errors",
                report.failures.len(),
                report.eps
            );
            Ok(())
        }
        GradcheckStatus::Fail => Err(numerical(format!(
            "{} gradient mismatches above tolerance {:e} (max rel err {:e})",
            report.failures.len(),
            report.tolerance,
            report.max_rel_err
        ))),
    }
}

fn shorten_tips(a: ShortenTipsArgs) -> Outcome {
    let skel = canonical_skeleton();
    let records = read_records(&a.input)?;
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let pose = rec.pose3d().map_err(context(&a.input))?;
        let fixed = shorten_fingertips(&pose, a.factor, &skel)
            .map_err(|e| data(format!("record {i}: {e}")))?;
        let px = match rec.camera {
            Some(k) => Some(
                project(&fixed, &k)
                    .map_err(|e| data(format!("record {i}: {e}")))?
                    .0,
            ),
            None => None,
        };
        let mut r = rec;
        for (k, kp) in r.keypoints.iter_mut().enumerate() {
            kp.zr_norm = None;
            if !kp.valid {
                continue;
            }
            kp.xyz_mm = kp.xyz_mm.map(|_| fixed.points[k]);
            match &px {
                Some(p) => kp.px = kp.px.map(|_| p.points[k]),
                // stale without a camera to reproject with
                None if FINGERTIPS.contains(&k) && kp.xyz_mm.is_some() => kp.px = None,
                None => {}
            }
        }
        out.push(r);
    }
    write_records(&a.out, &out)
}

fn bone_stats(a: BoneStatsArgs) -> Outcome {
    let records = read_records(&a.input)?;
    let poses: Vec<Pose3D> = records
        .iter()
        .map(|r| r.pose3d())
        .collect::<Result<_, _>>()
        .map_err(context(&a.input))?;
    let stats = mean_bone_stats(&poses, &canonical_skeleton())?;
    write_json_file(&a.out, &stats)
}
