//! `geotag-facade`: batch front-end over `geotag-core`.
//!
//! Subcommands compose on plain files:
//! `synth` writes a scene directory, `trace` writes per-panorama visibility
//! intervals, `annotate` writes coarse COCO annotations plus a run report,
//! `eval` scores annotations against ground truth and `render` draws one
//! panorama's scene as SVG.

pub mod commands;
pub mod provenance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_annotate, cmd_eval, cmd_render, cmd_synth, cmd_trace};
pub use provenance::{Provenance, RunConfig};

/// How a run ended, short of a fatal error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// Some panoramas were skipped or had no metadata.
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Partial => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "geotag-facade", version, about = "Coarse facade annotation from building footprints")]
pub struct Cli {
    /// Worker threads for per-panorama work (default: all cores).
    #[arg(long, global = true, env = "GEOTAG_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic street scene with ground truth and detections.
    Synth(SynthArgs),
    /// Ray-trace each panorama and write its visibility intervals.
    Trace(TraceArgs),
    /// Relabel detections with footprint categories.
    Annotate(AnnotateArgs),
    /// Score annotations against ground truth.
    Eval(EvalArgs),
    /// Draw one panorama's scene as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, visible_alias = "n-buildings", default_value_t = 12)]
    pub buildings: usize,
    #[arg(long, visible_alias = "n-cameras", default_value_t = 4)]
    pub cameras: usize,
    #[arg(long, default_value_t = 6)]
    pub categories: u32,
    #[arg(long, default_value_t = 10.0)]
    pub corridor_width: f64,
    /// Radius used for the ground-truth visibility.
    #[arg(long, default_value_t = 50.0)]
    pub radius: f64,
    /// Maximum box shift as a fraction of box size.
    #[arg(long, default_value_t = 0.0)]
    pub noise_shift: f64,
    /// Maximum relative box size change.
    #[arg(long, default_value_t = 0.0)]
    pub noise_scale: f64,
    /// Keep every jittered box at or above this IoU with its source.
    #[arg(long)]
    pub min_iou: Option<f64>,
    /// False positives per true box.
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    /// Score range for true detections.
    #[arg(long, default_value_t = 1.0)]
    pub score_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub score_max: f64,
    /// Seed for detection noise (defaults to --seed).
    #[arg(long)]
    pub detection_seed: Option<u64>,
}

/// Where the standard inputs live. `--scene DIR` fills in the usual file
/// names; explicit paths win.
#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub footprints: Option<PathBuf>,
    #[arg(long)]
    pub metas: Option<PathBuf>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Tracing radius in metres.
    #[arg(long, default_value_t = 50.0)]
    pub radius: f64,
    /// Sweep step in degrees; must divide 360.
    #[arg(long, default_value_t = 1.0)]
    pub step_deg: f64,
    /// Pixel x decreases with heading.
    #[arg(long)]
    pub flip_heading: bool,
    /// Use the brute-force sweep instead of the bucketed one.
    #[arg(long)]
    pub brute_force: bool,
}

impl Default for GeometryArgs {
    fn default() -> Self {
        GeometryArgs {
            radius: 50.0,
            step_deg: 1.0,
            flip_heading: false,
            brute_force: false,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Output directory for `<pano_id>.intervals.json` files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Minimum horizontal IoU between a box and a visibility interval.
    #[arg(long, default_value_t = 0.3)]
    pub iou_x: f64,
    #[arg(long, value_enum, default_value_t = ThresholdArg::Adaptive)]
    pub threshold_mode: ThresholdArg,
    #[arg(long, default_value_t = 0.5)]
    pub fixed_threshold: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Seed for the panorama batch order.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Coarse annotations, COCO format.
    #[arg(long)]
    pub out: PathBuf,
    /// Run report with per-batch thresholds and box dispositions.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Accuracy,
    Ap,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::All)]
    pub mode: EvalMode,
    /// IoU a coarse box needs with a ground-truth box to count as correct.
    #[arg(long, default_value_t = 0.8)]
    pub iou_thr: f64,
    /// Metrics JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Panorama to draw.
    #[arg(long)]
    pub pano: String,
    /// Interval file from `trace`; traced on the fly when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.workers {
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Trace(a) => cmd_trace(&a),
        Command::Annotate(a) => cmd_annotate(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
    }
}
