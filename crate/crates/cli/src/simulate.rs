use fringe_core::io::{encode_pfm, encode_pfm_f64, encode_pgm, mask_to_gray};
use fringe_core::patterns::FringeSpec;
use fringe_core::simulator::{
    encoder_log_to_csv, make_encoder_log, render_triple, EncoderModel, RenderOptions, Scene, Trajectory,
};
use fringe_core::{CalibrationData, DeskRig};
use nalgebra::Vector3;
use serde_json::json;

use crate::args::SimulateArgs;
use crate::error::{CliResult, Failure, WithPath};
use crate::manifest::{read_input_text, OutputDir};

pub fn run(args: &SimulateArgs, seed: u64) -> CliResult<()> {
    if args.triples == 0 {
        return Err(Failure::usage("--triples must be at least 1"));
    }
    if args.frame_rate.is_nan() || args.frame_rate <= 0.0 {
        return Err(Failure::usage("--frame-rate must be > 0"));
    }
    let rig = DeskRig::standard();
    let mut inputs = Vec::new();
    let scene = match &args.scene {
        Some(p) => Scene::from_json_str(&read_input_text(p, &mut inputs)?).at(p)?,
        None => rig.scene.clone(),
    };
    let calibration = match &args.calibration {
        Some(p) => CalibrationData::from_json_str(&read_input_text(p, &mut inputs)?).at(p)?,
        None => rig.calibration.clone(),
    };
    let direction = Vector3::from(args.direction);
    let last_trigger = args.start + (3 * args.triples - 1) as f64 / args.frame_rate;
    let trajectory = match &args.trajectory {
        Some(p) => Trajectory::from_csv(&read_input_text(p, &mut inputs)?, direction).at(p)?,
        None => Trajectory::uniform(args.speed, last_trigger, 1000.0, direction)?,
    };
    let spec = FringeSpec::new(args.pitch, args.mean, args.modulation)?;

    let mut out = OutputDir::create(&args.out)?;
    for j in 0..args.triples {
        let k = (3 * j) as f64;
        let times = [0.0, 1.0, 2.0].map(|i| args.start + (k + i) / args.frame_rate);
        let options = RenderOptions {
            encoder: EncoderModel {
                quantization: args.encoder_quantization,
                noise_sigma: args.encoder_noise,
                seed: seed.wrapping_add(j as u64),
            },
            image_noise_sigma: args.image_noise,
            seed,
        };
        let rendered = render_triple(&scene, &calibration, &spec, &trajectory, times, &options)?;
        let dir = format!("triple_{j:04}");
        let f = &rendered.frames;
        for (name, img) in [("I1", &f.i1), ("I2", &f.i2), ("I3", &f.i3)] {
            out.write(&format!("{dir}/{name}.pfm"), &encode_pfm(img))?;
        }
        let d_true = times.map(|t| trajectory.displacement_at(t).unwrap_or(f64::NAN));
        let frames = json!({ "t": f.t, "d": f.d, "d_true": d_true });
        out.write(&format!("{dir}/frames.json"), pretty(&frames).as_bytes())?;
        let truth = &rendered.truth[1];
        out.write(&format!("{dir}/gt_depth.pfm"), &encode_pfm_f64(&truth.depth))?;
        out.write(&format!("{dir}/gt_phase.pfm"), &encode_pfm_f64(&truth.phase))?;
        out.write(&format!("{dir}/gt_mask.pgm"), &encode_pgm(&mask_to_gray(&truth.valid)))?;
    }

    let encoder = EncoderModel {
        quantization: args.encoder_quantization,
        noise_sigma: args.encoder_noise,
        seed,
    };
    let log = make_encoder_log(&trajectory, args.encoder_rate, &encoder)?;
    out.write("encoder.csv", encoder_log_to_csv(&log).as_bytes())?;
    out.write("trajectory.csv", trajectory.to_csv().as_bytes())?;
    out.write("calibration.json", pretty(&calibration.to_json()).as_bytes())?;
    out.finish(
        "simulate",
        seed,
        serde_json::to_value(args).expect("args serialize"),
        inputs,
    )
}

pub fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}
