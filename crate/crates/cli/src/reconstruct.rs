use std::path::Path;

use fringe_core::cloud::PointCloud;
use fringe_core::geometry::{fit_plane, WorldPoint};
use fringe_core::io::{decode_pfm, encode_pfm_f64, encode_pgm, mask_to_gray};
use fringe_core::psp::tilt_from_plane;
use fringe_core::simulator::Trajectory;
use fringe_core::{run_pipeline, CalibrationData, DeskRig, FrameTriple, ImageF64, Mask, PipelineConfig};
use nalgebra::Vector3;
use serde_json::Value;

use crate::args::ReconstructArgs;
use crate::error::{CliResult, Failure, WithPath};
use crate::manifest::{read_input, read_input_text, FileEntry, OutputDir};

/// Defaults, then the `--config` document, then explicit flags.
fn effective_config(
    args: &ReconstructArgs,
    config_path: Option<&Path>,
    inputs: &mut Vec<FileEntry>,
) -> CliResult<PipelineConfig> {
    let mut config = match config_path {
        Some(p) => serde_json::from_str::<PipelineConfig>(&read_input_text(p, inputs)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    if let Some(z) = args.z_min {
        config.z_min_mm = z;
    }
    if let Some(t) = args.theta {
        config.theta_deg = t;
    }
    if let Some(a) = args.theta_axis {
        config.theta_axis = a;
    }
    if let Some(l) = args.lambda {
        config.lambda_px = l;
    }
    if args.sign_flip {
        config.sign_flip = true;
    }
    if let Some(m) = args.modulation_threshold {
        config.modulation_threshold = m;
    }
    if let Some(d) = args.direction {
        config.direction = d;
    }
    if let Some(p) = &args.theta_from {
        let fit = fit_plane(&ply_points(p, inputs)?).at(p)?;
        let (theta, axis) = tilt_from_plane(&fit);
        config.theta_deg = theta.to_degrees();
        config.theta_axis = axis.into();
    }
    if let Some(p) = &args.direction_from {
        let fit = fit_plane(&ply_points(p, inputs)?).at(p)?;
        config.direction = fit.principal_direction().into();
    }
    config.validate()?;
    Ok(config)
}

fn ply_points(path: &Path, inputs: &mut Vec<FileEntry>) -> CliResult<Vec<WorldPoint>> {
    let cloud = PointCloud::from_ply(&read_input_text(path, inputs)?).at(path)?;
    Ok(cloud.positions().copied().collect())
}

fn number_triple(doc: &Value, key: &str, path: &Path) -> CliResult<[f64; 3]> {
    let arr = doc
        .get(key)
        .and_then(Value::as_array)
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Failure::usage(format!("{}: `{key}` must be an array of 3 numbers", path.display())))?;
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v
            .as_f64()
            .ok_or_else(|| Failure::usage(format!("{}: `{key}` must be an array of 3 numbers", path.display())))?;
    }
    Ok(out)
}

fn load_triple(args: &ReconstructArgs, direction: Vector3<f64>, inputs: &mut Vec<FileEntry>) -> CliResult<FrameTriple> {
    let names = ["I1.pfm", "I2.pfm", "I3.pfm", "frames.json"];
    let missing: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| !args.frames.join(n).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Failure::usage(format!(
            "incomplete triple in {}: missing {}",
            args.frames.display(),
            missing.join(", ")
        )));
    }
    let mut frames = Vec::with_capacity(3);
    for name in &names[..3] {
        let p = args.frames.join(name);
        frames.push(decode_pfm(&read_input(&p, inputs)?).at(&p)?);
    }
    let meta_path = args.frames.join("frames.json");
    let meta: Value = serde_json::from_str(&read_input_text(&meta_path, inputs)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", meta_path.display())))?;
    let t = number_triple(&meta, "t", &meta_path)?;
    let d = match &args.encoder {
        Some(p) => {
            let log = Trajectory::from_csv(&read_input_text(p, inputs)?, direction).at(p)?;
            let mut d = [0.0; 3];
            for (dk, tk) in d.iter_mut().zip(t) {
                *dk = log.displacement_at(tk).at(p)?;
            }
            d
        }
        None => number_triple(&meta, "d", &meta_path)?,
    };
    let [i1, i2, i3]: [_; 3] = frames.try_into().expect("three frames");
    FrameTriple::new(i1, i2, i3, t, d).at(&args.frames)
}

pub fn run(args: &ReconstructArgs, config_path: Option<&Path>, seed: u64) -> CliResult<()> {
    let mut inputs = Vec::new();
    let config = effective_config(args, config_path, &mut inputs)?;
    let calibration = match &args.calibration {
        Some(p) => CalibrationData::from_json_str(&read_input_text(p, &mut inputs)?).at(p)?,
        None => DeskRig::standard().calibration,
    };
    let triple = load_triple(args, config.direction(), &mut inputs)?;
    let output = run_pipeline(&triple, &calibration, &config)?;

    let mut out = OutputDir::create(&args.out)?;
    out.write("cloud.ply", output.cloud.to_ply().as_bytes())?;
    out.write("diagnostics.csv", output.diagnostics_csv().as_bytes())?;
    if args.debug_maps {
        let orders = output.orders.order.map(|&k| k as f64);
        let orders = mask_nan(&orders, &output.orders.mask);
        out.write(
            "debug/wrapped_phase.pfm",
            &encode_pfm_f64(&mask_nan(&output.wrapped.phase, &output.wrapped.mask)),
        )?;
        out.write("debug/modulation.pfm", &encode_pfm_f64(&output.wrapped.modulation))?;
        out.write("debug/min_phase.pfm", &encode_pfm_f64(&output.min_phase.0))?;
        out.write("debug/fringe_order.pfm", &encode_pfm_f64(&orders))?;
        out.write("debug/absolute_phase.pfm", &encode_pfm_f64(&output.absolute.phase))?;
        out.write("debug/reference_depth.pfm", &encode_pfm_f64(&output.reference.depth))?;
        out.write("debug/mask.pgm", &encode_pgm(&mask_to_gray(&output.wrapped.mask)))?;
    }
    let last = output.rounds.last().expect("round 0 always present");
    println!(
        "{} points ({} dropped), {} correction round(s), last round shift {:.6} mm",
        output.cloud.len(),
        output.cloud.dropped,
        output.rounds.len() - 1,
        last.rmse_mm
    );
    let snapshot = serde_json::json!({
        "pipeline": config,
        "frames": args.frames,
        "out": args.out,
        "debug_maps": args.debug_maps,
    });
    out.finish("reconstruct", seed, snapshot, inputs)
}

fn mask_nan(img: &ImageF64, mask: &Mask) -> ImageF64 {
    let (w, h) = img.dims();
    ImageF64::from_fn_par(w, h, |x, y| if *mask.get(x, y) { *img.get(x, y) } else { f64::NAN })
}
