use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Scale-normalized 2.5D hand pose tools.
///
/// Paths may be `-` for stdin or stdout. Exit codes: 0 success, 2 usage
/// error, 3 data or validation error, 4 numerical failure.
#[derive(Parser)]
#[command(name = "hand25d", version)]
struct Cli {
    /// Process records on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic poses with 3D, pixel and normalized-depth views.
    Synth(SynthArgs),
    /// Turn 3D poses into scale-normalized 2.5D records.
    Normalize(NormalizeArgs),
    /// Recover normalized (or, with bone stats, absolute) 3D poses from 2.5D records.
    Reconstruct(ReconstructArgs),
    /// Render 2.5D records into heatmap stacks.
    Encode(EncodeArgs),
    /// Read 2.5D poses back out of heatmap stacks.
    Decode(DecodeArgs),
    /// Compare predictions with ground truth and write a report.
    Eval(EvalArgs),
    /// Write the PCK curve of a report as CSV.
    PckCurve(PckCurveArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Move fingertips toward the DIP joints.
    ShortenTips(ShortenTipsArgs),
    /// Mean bone lengths of a set of 3D poses.
    BoneStats(BoneStatsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    /// Use these bone lengths instead of randomized ones.
    #[arg(long)]
    bone_stats: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// Normalization bone as `name:name`.
    #[arg(long, default_value = "index_mcp:palm")]
    pair: String,
    /// Target length of the normalization bone.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Camera JSON; overrides cameras stored in records.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[command(flatten)]
    pair: PairArgs,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Scale poses to millimetres with these bone lengths.
    #[arg(long)]
    bone_stats: Option<PathBuf>,
    /// Fail with exit code 4 if any record cannot be solved.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    pair: PairArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Direct,
    Latent,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExponentArg {
    L1,
    L2sq,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutOfGridArg {
    Error,
    Clamp,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Grid size as `WxH`.
    #[arg(long, default_value = "128x128")]
    grid: String,
    #[arg(long, default_value_t = hand25d::heatmap::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "direct")]
    kind: Kind,
    #[arg(long, value_enum, default_value = "l2sq")]
    exponent: ExponentArg,
    #[arg(long, value_enum, default_value = "error")]
    out_of_grid: OutOfGridArg,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON array of 21 positive spreads for latent stacks.
    #[arg(long)]
    beta: Option<PathBuf>,
    /// Reject stacks of any other kind.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Camera JSON attached to the output records.
    #[arg(long)]
    camera: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    #[value(name = "root_aligned", alias = "root-aligned")]
    RootAligned,
    #[value(name = "absolute_with_scale", alias = "absolute-with-scale")]
    AbsoluteWithScale,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    #[value(name = "2d")]
    TwoD,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value = "root_aligned")]
    protocol: ProtocolArg,
    #[arg(long, value_enum, default_value = "3d")]
    space: SpaceArg,
    #[arg(long)]
    out: PathBuf,
    /// Measure 2D errors in head lengths of this many pixels.
    #[arg(long)]
    head_length: Option<f64>,
    /// Threshold grid as `start:stop:count`.
    #[arg(long)]
    thresholds: Option<String>,
}

#[derive(Args)]
struct PckCurveArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    op: String,
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long)]
    zero_upstream: bool,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShortenTipsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    factor: f64,
}

#[derive(Args)]
struct BoneStatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hand25d: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
