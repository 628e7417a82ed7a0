use fringe_core::io::{encode_pfm, encode_pgm, to_gray};
use fringe_core::patterns::{rasterize_pattern, FringeSpec};

use crate::args::PatternsArgs;
use crate::error::{CliResult, Failure};
use crate::manifest::OutputDir;

pub fn run(args: &PatternsArgs, seed: u64) -> CliResult<()> {
    if args.width == 0 || args.height == 0 {
        return Err(Failure::usage("--width and --height must be positive"));
    }
    let spec = FringeSpec::new(args.pitch, args.mean, args.modulation)?;
    let mut out = OutputDir::create(&args.out)?;
    for step in 1..=3 {
        let img = rasterize_pattern(&spec, (args.width, args.height), step);
        out.write(&format!("pattern_{step}.pfm"), &encode_pfm(&img))?;
        let gray = to_gray(&img.map(|&v| v as f64), 0.0, 1.0);
        out.write(&format!("pattern_{step}.pgm"), &encode_pgm(&gray))?;
    }
    out.finish(
        "patterns",
        seed,
        serde_json::to_value(args).expect("args serialize"),
        Vec::new(),
    )
}
