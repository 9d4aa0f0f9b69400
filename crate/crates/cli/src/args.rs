use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use splatsim_core::features::DEFAULT_K;
use splatsim_core::lidar::{DEFAULT_DEPTH, DEFAULT_DEPTH_GAP};
use splatsim_core::splatgen::{DEFAULT_ALPHA, DEFAULT_BETA};

const CONFIG_HELP: &str = "\
Config file: one `key = value` per line, `#` starts a comment. Keys are long flag
names (`alpha`, `no-resample`, `sensor`), optionally prefixed by a subcommand
(`pipeline.alpha`). `sensor.<field>` sets a SensorModel field for `simulate`.
Flags given on the command line or through the environment win over the file.

Environment: SPLATSIM_THREADS caps worker threads; RUST_LOG overrides -v.";

/// Parses exactly `N` comma-separated finite numbers.
fn floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))?;
        if !o.is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "splatsim", version, about = "Adaptive splat surface models and spinning LiDAR simulation", after_help = CONFIG_HELP)]
pub struct Cli {
    /// Seed for every stochastic stage (range noise, synthetic scenes).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "SPLATSIM_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Read default flag values from a `key = value` file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow one pass of splats from a point cloud.
    Splat(SplatArgs),
    /// Denoise and resample a cloud on its splat surface.
    Resample(ResampleArgs),
    /// Full adaptive pipeline: denoise, splat, resample, splat again.
    Pipeline(PipelineArgs),
    /// Ray-cast a spinning sensor over a splat model along a trajectory.
    Simulate(SimulateArgs),
    /// Compare a simulated cloud with the original.
    Eval(EvalArgs),
    /// Write a built-in synthetic scene.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Basic,
    AdaSemantic,
    AdaDescr,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input cloud (.ply, or KITTI .bin).
    #[arg(short, long, value_name = "CLOUD")]
    pub input: PathBuf,

    /// SemanticKITTI .label file matching a .bin input.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,

    /// Class-to-group mapping (`<class> <group> [dynamic]` per line).
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::AdaSemantic)]
    pub variant: VariantArg,

    /// Neighborhood size K.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,

    /// Discard-sphere factor.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,

    /// Smoothness threshold on normal dot products.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,

    /// Override a group's scale factor, e.g. `linear=0.5` (repeatable).
    #[arg(long = "group-scale", value_name = "GROUP=SCALE")]
    pub group_scale: Vec<String>,

    /// Orient normals towards this point when the cloud has no sensor
    /// positions (default: towards +z).
    #[arg(long, value_name = "X,Y,Z", value_parser = floats::<3>, allow_negative_numbers = true)]
    pub viewpoint: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct SplatArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Output splat file.
    #[arg(short, long, value_name = "SPLATS")]
    pub output: PathBuf,

    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Output cloud.
    #[arg(short, long, value_name = "CLOUD")]
    pub output: PathBuf,

    #[command(flatten)]
    pub gen: GenArgs,

    /// Skip the 3σ denoising step.
    #[arg(long)]
    pub no_denoise: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Output splat file.
    #[arg(short, long, value_name = "SPLATS")]
    pub output: PathBuf,

    /// Also write the cloud the final splats were grown from.
    #[arg(long, value_name = "CLOUD")]
    pub cloud_out: Option<PathBuf>,

    /// Write per-stage wall-clock times as `stage,seconds`.
    #[arg(long, value_name = "CSV")]
    pub timings_out: Option<PathBuf>,

    #[command(flatten)]
    pub gen: GenArgs,

    #[arg(long)]
    pub no_denoise: bool,

    #[arg(long)]
    pub no_resample: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Splat model.
    #[arg(short, long, value_name = "SPLATS")]
    pub splats: PathBuf,

    /// Trajectory file, one `frame x y z [pitch_deg]` per line.
    #[arg(short, long, value_name = "FILE", conflicts_with = "pose")]
    pub trajectory: Option<PathBuf>,

    /// Single sensor pose when no trajectory is given.
    #[arg(long, value_name = "X,Y,Z", value_parser = floats::<3>, default_value = "0,0,2", allow_negative_numbers = true)]
    pub pose: [f64; 3],

    /// Sensor preset.
    #[arg(long, default_value = "hdl32")]
    pub sensor: String,

    /// Override a sensor field, e.g. `range_max=80` (repeatable).
    #[arg(long = "sensor-set", value_name = "FIELD=VALUE")]
    pub sensor_set: Vec<String>,

    /// Gaussian range noise σ in meters (default: the sensor's noise_sigma).
    #[arg(long, value_name = "METERS")]
    pub noise: Option<f64>,

    /// Average the first hits of each ray instead of keeping the nearest.
    #[arg(long)]
    pub multi_depth: bool,

    /// Hits averaged per ray with --multi-depth.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,

    /// Largest gap between averaged hits, in meters.
    #[arg(long, default_value_t = DEFAULT_DEPTH_GAP)]
    pub depth_gap: f64,

    /// Directory for scan_%06d.ply files and accumulated.ply.
    #[arg(short, long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Simulated cloud.
    #[arg(long, value_name = "CLOUD")]
    pub sim: PathBuf,

    /// Original cloud.
    #[arg(long, value_name = "CLOUD", required_unless_present = "ideal_plane")]
    pub ori: Option<PathBuf>,

    /// Measure against the plane n·x + d = 0 instead of the original cloud.
    #[arg(long, value_name = "NX,NY,NZ,D", value_parser = floats::<4>, allow_negative_numbers = true)]
    pub ideal_plane: Option<[f64; 4]>,

    /// Class ids for the per-class table.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u32>,

    /// Radius for local density statistics of the simulated cloud.
    #[arg(long, value_name = "METERS")]
    pub density_radius: Option<f64>,

    /// Splat model for coverage and primitive counts (coverage uses --ori).
    #[arg(long, value_name = "SPLATS")]
    pub splats: Option<PathBuf>,

    /// Plane distance tolerance for coverage.
    #[arg(long, default_value_t = 0.01)]
    pub coverage_tol: f64,

    /// Directory for report.csv, timings.csv and summary.txt.
    #[arg(short, long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scene {
    Plane,
    Dihedral,
    Pole,
    ScanLines,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub scene: Scene,

    /// Output cloud.
    #[arg(short, long, value_name = "CLOUD")]
    pub output: PathBuf,

    /// Also write the class-to-group mapping of the built-in labels.
    #[arg(long, value_name = "FILE")]
    pub mapping_out: Option<PathBuf>,

    /// Gaussian noise σ along the surface normal.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,

    /// Plane side or dihedral face size in meters.
    #[arg(long, default_value_t = 20.0)]
    pub size: f64,

    /// Grid spacing for plane, dihedral and the pole's ground.
    #[arg(long, default_value_t = 0.1)]
    pub spacing: f64,

    /// Sensor height above the plane.
    #[arg(long, default_value_t = 2.0)]
    pub sensor_height: f64,
}
