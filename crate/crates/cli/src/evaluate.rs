use fringe_core::cloud::PointCloud;
use fringe_core::io::{decode_pfm, diverging_colormap, encode_pfm_f64, encode_ppm};
use fringe_core::metrics::{
    compare_stats, depth_error_report, error_report_with, fit_sphere, ReportOptions, SphereFit, Stats,
};
use nalgebra::Vector3;
use serde_json::json;

use crate::args::EvaluateArgs;
use crate::error::{CliResult, Failure, WithPath};
use crate::manifest::{read_input, read_input_text, OutputDir};
use crate::simulate::pretty;

pub fn run(args: &EvaluateArgs, seed: u64) -> CliResult<()> {
    let mut inputs = Vec::new();
    let cloud = PointCloud::from_ply(&read_input_text(&args.cloud, &mut inputs)?).at(&args.cloud)?;
    let options = ReportOptions {
        mad_threshold: args.mad,
        erode_boundary: args.erode,
    };

    let mut sphere: Option<SphereFit> = None;
    let report = if let Some(path) = &args.truth {
        let truth = decode_pfm(&read_input(path, &mut inputs)?).at(path)?;
        depth_error_report(&cloud, &truth.map(|&v| v as f64), &options).at(&args.cloud)?
    } else {
        let s = match args.sphere {
            Some([cx, cy, cz, r]) => SphereFit::new(Vector3::new(cx, cy, cz), r)?,
            None => fit_sphere(&cloud, args.fixed_radius).at(&args.cloud)?,
        };
        sphere = Some(s);
        error_report_with(&cloud, &s, &options).at(&args.cloud)?
    };

    let comparison = match &args.baseline {
        Some(p) => {
            let base: Stats = serde_json::from_str(&read_input_text(p, &mut inputs)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            Some(compare_stats(&base, &Stats::from(&report)))
        }
        None => None,
    };

    let mut doc = report.to_json();
    if let Some(s) = &sphere {
        doc["sphere"] = json!({ "center": s.center, "radius": s.radius, "rms_residual": s.rms_residual });
    }
    if let Some(c) = &comparison {
        doc["comparison"] = serde_json::to_value(c).expect("comparison serializes");
    }

    let limit = args.color_limit.unwrap_or_else(|| report.max_abs_error());
    let mut out = OutputDir::create(&args.out)?;
    out.write("report.csv", report.to_csv().as_bytes())?;
    out.write("report.json", pretty(&doc).as_bytes())?;
    out.write("error_map.pfm", &encode_pfm_f64(&report.error_map))?;
    out.write(
        "error_map.ppm",
        &encode_ppm(&diverging_colormap(&report.error_map, limit)),
    )?;

    println!(
        "mean {:.4} mm, std {:.4} mm, rmse {:.4} mm over {} points ({} excluded)",
        report.mean, report.std, report.rmse, report.count, report.excluded
    );
    if let Some(c) = &comparison {
        println!("vs baseline: {}", c.summary());
    }
    out.finish(
        "evaluate",
        seed,
        serde_json::to_value(args).expect("args serialize"),
        inputs,
    )
}
