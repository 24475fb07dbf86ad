use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshseg_core::viewgen::{PolarAxis, TrajectoryConfig};

#[derive(Debug, Parser)]
#[command(
    name = "meshseg",
    version,
    about = "Zero-shot mesh part segmentation by multi-view revoting"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file with defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output; repeat for debug and trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the camera trajectory.
    Views(ViewsArgs),
    /// Render every view to PNG and face-index files.
    Render(RenderArgs),
    /// Segment a mesh part from text queries.
    Segment(Box<SegmentArgs>),
    /// Score reports against ground-truth face labels.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrajectoryArgs {
    /// Number of views K.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Camera distance from the origin.
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    /// Polar angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [75.0, 115.0])]
    pub thetas: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    pub image_size: u32,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 60.0)]
    pub fov: f64,
    #[arg(long, value_enum, default_value_t = Axis::Y)]
    pub polar_axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Y,
    Z,
}

impl TrajectoryArgs {
    pub fn config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            views: self.k,
            radius: self.radius,
            polar_angles: self.thetas.clone(),
            image_size: self.image_size,
            fov_y: self.fov,
            polar_axis: match self.polar_axis {
                Axis::Y => PolarAxis::Y,
                Axis::Z => PolarAxis::Z,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ViewsArgs {
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    /// Emit full viewpoints, matrices included, as JSON.
    #[arg(long)]
    pub json: bool,
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    /// Untextured mesh (OBJ or PLY).
    #[arg(long)]
    pub mesh: PathBuf,
    /// Textured variant with per-face uvs; same faces as --mesh.
    #[arg(long)]
    pub textured_mesh: Option<PathBuf>,
    /// PNG texture for --textured-mesh, or for --mesh when that has uvs.
    #[arg(long)]
    pub texture: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Oracle,
    Files,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorruptKind {
    None,
    Complement,
    Shift,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchSel {
    Both,
    Untextured,
    Textured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MultiBoxArg {
    Top1,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Revote,
    Baseline,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,

    /// Object class text.
    #[arg(long, default_value = "object")]
    pub object: String,
    /// Part to ground; repeat for several parts.
    #[arg(long, required = true)]
    pub query: Vec<String>,

    #[arg(long, value_enum)]
    pub backend: BackendKind,

    /// Face labels driving the oracle backend.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Oracle target label (name or id); defaults to the query text.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value_t = CorruptKind::None)]
    pub corrupt: CorruptKind,
    /// Corrupted view indices, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "corrupt_count")]
    pub corrupt_views: Vec<usize>,
    /// Pick this many corrupted views from --seed.
    #[arg(long)]
    pub corrupt_count: Option<usize>,
    #[arg(long, value_enum, default_value_t = BranchSel::Both)]
    pub corrupt_branch: BranchSel,
    #[arg(long, default_value_t = 5, allow_negative_numbers = true)]
    pub shift_dx: i32,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub shift_dy: i32,
    #[arg(long, default_value_t = 0.9)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0.9)]
    pub corrupt_confidence: f64,

    /// Directory of recorded detections and masks for the files backend.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,

    /// Sidecar base URL for the http backend.
    #[arg(long, default_value = "http://127.0.0.1:8731")]
    pub url: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,

    #[arg(long, default_value_t = 0.90)]
    pub iou_cutoff: f64,
    #[arg(long, default_value_t = 0.5)]
    pub membership_fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub min_pixels: u32,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub o_threshold: f64,
    #[arg(long, value_enum, default_value_t = MultiBoxArg::Top1)]
    pub multi_box: MultiBoxArg,
    #[arg(long, value_enum, default_value_t = Method::Revote)]
    pub method: Method,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// report.json from `segment`; several reports are scored as one assignment.
    #[arg(long, required = true)]
    pub report: Vec<PathBuf>,
    /// Ground-truth face labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Part name or id; defaults to the report's query text.
    #[arg(long)]
    pub part: Option<String>,
    /// Ignore faces no view ever saw.
    #[arg(long)]
    pub visible_only: bool,
    /// Weight faces by area; needs --mesh.
    #[arg(long, requires = "mesh")]
    pub area_weighted: bool,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Output directory; defaults to the first report's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
