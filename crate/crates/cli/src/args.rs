use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fringe_core::motion::CorrectionMode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fringe",
    version,
    about = "Motion-compensated three-step fringe projection profilometry"
)]
pub struct Cli {
    /// Seed for every random draw (encoder and image noise).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Pipeline configuration JSON (read by `reconstruct`; flags override it).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render fringe frame triples and ground truth for a moving rig.
    Simulate(SimulateArgs),
    /// Reconstruct a point cloud from one frame triple.
    Reconstruct(ReconstructArgs),
    /// Score a point cloud against a sphere or a ground-truth depth map.
    Evaluate(EvaluateArgs),
    /// Write the three projector patterns.
    Patterns(PatternsArgs),
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("bad number `{p}`"))?;
    }
    Ok(out)
}

fn parse_sphere(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected cx,cy,cz,r, got `{s}`"));
    }
    let mut out = [0.0; 4];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("bad number `{p}`"))?;
    }
    Ok(out)
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Scene JSON; defaults to a 50 mm sphere at 500 mm.
    #[arg(long)]
    pub scene: Option<PathBuf>,

    /// Calibration JSON; defaults to the built-in desk rig.
    #[arg(long)]
    pub calibration: Option<PathBuf>,

    /// Trajectory CSV `time_s,displacement_mm`; defaults to constant `--speed`.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,

    /// Stage travel direction in the camera frame.
    #[arg(long, value_parser = parse_vec3, default_value = "1,0,0")]
    pub direction: [f64; 3],

    /// Stage speed (mm/s) when no trajectory file is given.
    #[arg(long, default_value_t = 80.0)]
    pub speed: f64,

    /// Number of back-to-back frame triples.
    #[arg(long, default_value_t = 1)]
    pub triples: usize,

    /// Camera trigger rate (Hz).
    #[arg(long, default_value_t = 120.0)]
    pub frame_rate: f64,

    /// Time of the first trigger (s), for exposure phase offsets.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,

    /// Fringe pitch (projector px).
    #[arg(long, default_value_t = 18.0)]
    pub pitch: f64,

    /// Pattern mean intensity.
    #[arg(long, default_value_t = 0.5)]
    pub mean: f64,

    /// Pattern modulation amplitude.
    #[arg(long, default_value_t = 0.45)]
    pub modulation: f64,

    /// Encoder log sample rate (Hz).
    #[arg(long, default_value_t = 1000.0)]
    pub encoder_rate: f64,

    /// Encoder quantization step (mm); 0 disables.
    #[arg(long, default_value_t = 0.0)]
    pub encoder_quantization: f64,

    /// Encoder Gaussian noise sigma (mm).
    #[arg(long, default_value_t = 0.0)]
    pub encoder_noise: f64,

    /// Additive Gaussian image noise sigma (intensity units).
    #[arg(long, default_value_t = 0.0)]
    pub image_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Conventional,
    Uniform,
    General,
}

impl From<ModeArg> for CorrectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Conventional => CorrectionMode::Conventional,
            ModeArg::Uniform => CorrectionMode::Uniform,
            ModeArg::General => CorrectionMode::General,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    /// Triple directory holding I1.pfm, I2.pfm, I3.pfm and frames.json.
    #[arg(long)]
    pub frames: PathBuf,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Calibration JSON; defaults to the built-in desk rig.
    #[arg(long)]
    pub calibration: Option<PathBuf>,

    /// Encoder log CSV; when given, frame displacements are interpolated from it
    /// at the frame times instead of read from frames.json.
    #[arg(long)]
    pub encoder: Option<PathBuf>,

    /// Phase correction model.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Correction rounds after the conventional pass.
    #[arg(long)]
    pub iterations: Option<usize>,

    /// Nearest depth of interest (mm); places the reference plane.
    #[arg(long)]
    pub z_min: Option<f64>,

    /// Reference plane tilt (degrees).
    #[arg(long)]
    pub theta: Option<f64>,

    /// Tilt axis in the camera frame.
    #[arg(long, value_parser = parse_vec3)]
    pub theta_axis: Option<[f64; 3]>,

    /// Derive tilt and axis from a plane fitted to this PLY.
    #[arg(long, conflicts_with_all = ["theta", "theta_axis"])]
    pub theta_from: Option<PathBuf>,

    /// Fringe pitch (projector px).
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Reverse the sign of the displacement applied to scene points.
    #[arg(long)]
    pub sign_flip: bool,

    /// Pixels below this modulation are masked.
    #[arg(long)]
    pub modulation_threshold: Option<f64>,

    /// Stage travel direction in the camera frame.
    #[arg(long, value_parser = parse_vec3)]
    pub direction: Option<[f64; 3]>,

    /// Use the principal in-plane direction of a plane fitted to this PLY.
    #[arg(long, conflicts_with = "direction")]
    pub direction_from: Option<PathBuf>,

    /// Also write wrapped phase, modulation, minimum phase, fringe order and
    /// absolute phase maps.
    #[arg(long)]
    pub debug_maps: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("reference").required(true).args(["sphere", "fit", "truth"])))]
pub struct EvaluateArgs {
    /// Point cloud PLY.
    #[arg(long)]
    pub cloud: PathBuf,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Ideal sphere `cx,cy,cz,r` (mm).
    #[arg(long, value_parser = parse_sphere)]
    pub sphere: Option<[f64; 4]>,

    /// Fit a sphere to the cloud.
    #[arg(long)]
    pub fit: bool,

    /// Radius to hold fixed while fitting.
    #[arg(long, conflicts_with_all = ["sphere", "truth"])]
    pub fixed_radius: Option<f64>,

    /// Ground-truth depth PFM; errors are z − z_true.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Earlier report.json to compare against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,

    /// Exclude points beyond this many scaled MADs from the median error.
    #[arg(long)]
    pub mad: Option<f64>,

    /// Exclude points within this many pixels of the cloud boundary.
    #[arg(long, default_value_t = 0)]
    pub erode: usize,

    /// Error (mm) mapped to full colour saturation; defaults to the largest error.
    #[arg(long)]
    pub color_limit: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PatternsArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Fringe pitch (projector px).
    #[arg(long, default_value_t = 18.0)]
    pub pitch: f64,

    /// Pattern mean intensity.
    #[arg(long, default_value_t = 0.5)]
    pub mean: f64,

    /// Pattern modulation amplitude.
    #[arg(long, default_value_t = 0.45)]
    pub modulation: f64,

    /// Projector width (px).
    #[arg(long, default_value_t = 456)]
    pub width: usize,

    /// Projector height (px).
    #[arg(long, default_value_t = 570)]
    pub height: usize,
}
