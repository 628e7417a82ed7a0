//! Encoder-driven motion-error correction for three-step phase shifting.
//!
//! Two errors are removed. The *camera pixel error* is the integer disparity of a
//! scene point between fringe frames; frames 1 and 3 are resampled so that every
//! pixel sees the same point as in frame 2. The *phase shift error* is the change
//! of projector phase of that point between frames, which turns the nominal 2π/3
//! shifts into per-pixel shifts `δ1`, `δ3`; the wrapped phase is then solved
//! exactly for those shifts. Both errors come from the pixel Jacobians of the
//! pinhole models evaluated at a coarse reconstruction and the encoder-measured
//! displacement, and the procedure is iterated with the refined cloud.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{CalibrationData, ProjectionMatrix, WorldPoint};
use crate::image::{Image, ImageF32, ImageF64, Mask};
use crate::patterns::NOMINAL_SHIFT;
use crate::psp::{
    assemble_wrapped, atan2_wrapped, build_reference_plane, conventional_phase, min_phase_map, unwrap_and_reconstruct,
    wrapped_phase_conventional, AbsolutePhaseMap, FringeOrderMap, MinPhaseMap, ReferencePlane, WrappedPhaseMap,
    DEFAULT_MODULATION_THRESHOLD,
};
use crate::simulator::Trajectory;

/// Radius (px) within which a pixel without a coarse point borrows its nearest neighbour's.
pub const GAP_FILL_RADIUS: i64 = 5;

const MIN_SHIFT: f64 = 1e-6;

/// Three fringe images with their trigger times (s) and encoder readings (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTriple {
    pub i1: ImageF32,
    pub i2: ImageF32,
    pub i3: ImageF32,
    pub t: [f64; 3],
    pub d: [f64; 3],
}

impl FrameTriple {
    pub fn new(i1: ImageF32, i2: ImageF32, i3: ImageF32, t: [f64; 3], d: [f64; 3]) -> Result<Self> {
        i2.ensure_dims(i1.dims())?;
        i3.ensure_dims(i1.dims())?;
        if !(t[0] < t[1] && t[1] < t[2]) {
            return Err(Error::invalid("t", "frame times must be strictly increasing"));
        }
        Ok(FrameTriple { i1, i2, i3, t, d })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i1.dims()
    }
}

/// World-frame displacement of scene points between two frames (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Displacement(pub Vector3<f64>);

impl Displacement {
    pub fn zero() -> Self {
        Displacement(Vector3::zeros())
    }

    /// `direction · (d_b − d_a)`.
    pub fn along(direction: &Vector3<f64>, d_a: f64, d_b: f64) -> Self {
        Displacement(direction * (d_b - d_a))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// `r̂ · (d(t_b) − d(t_a))` with `d` interpolated from the encoder log.
pub fn displacement_between(log: &Trajectory, t_a: f64, t_b: f64, direction: &Vector3<f64>) -> Result<Displacement> {
    let d_a = log.displacement_at(t_a)?;
    let d_b = log.displacement_at(t_b)?;
    Ok(Displacement::along(direction, d_a, d_b))
}

/// Integer camera pixel errors of frames 1 and 3 relative to frame 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelErrorMaps {
    pub e12_u: Image<i32>,
    pub e12_v: Image<i32>,
    pub e32_u: Image<i32>,
    pub e32_v: Image<i32>,
    /// Pixels with a (possibly borrowed) coarse point.
    pub valid: Mask,
}

/// Replaces missing entries by the nearest present entry within `radius` pixels.
pub fn fill_gaps<T: Clone + Send + Sync>(grid: &Image<Option<T>>, radius: i64) -> Image<Option<T>> {
    let mut offsets: Vec<(i64, i64)> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= radius * radius)
        .collect();
    offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    let (w, h) = grid.dims();
    Image::from_fn_par(w, h, |x, y| {
        if let Some(v) = grid.get(x, y) {
            return Some(v.clone());
        }
        offsets
            .iter()
            .find_map(|&(dx, dy)| grid.get_checked(x as i64 + dx, y as i64 + dy).and_then(|v| v.clone()))
    })
}

fn round_px(v: f64) -> i32 {
    v.round() as i32
}

/// `ε = round(J · Δ)` for both rows of the camera Jacobian and both frame pairs.
pub fn camera_pixel_errors(
    camera: &ProjectionMatrix,
    coarse: &Image<Option<WorldPoint>>,
    d12: &Displacement,
    d32: &Displacement,
) -> PixelErrorMaps {
    let (w, h) = coarse.dims();
    let px = Image::from_fn_par(w, h, |x, y| {
        let p = (*coarse.get(x, y))?;
        let j = camera.jacobian(&p).ok()?;
        let (u12, v12) = j.apply(&d12.0);
        let (u32_, v32) = j.apply(&d32.0);
        Some([round_px(u12), round_px(v12), round_px(u32_), round_px(v32)])
    });
    let pick = |k: usize| px.map(|e| e.map_or(0, |e| e[k]));
    PixelErrorMaps {
        e12_u: pick(0),
        e12_v: pick(1),
        e32_u: pick(2),
        e32_v: pick(3),
        valid: px.map(Option::is_some),
    }
}

/// Frames 1 and 3 resampled onto the frame-2 pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedFrames {
    pub i1: ImageF32,
    pub i3: ImageF32,
    /// False where the pixel was discarded (no error estimate or fetch outside the image).
    pub keep: Mask,
}

/// `I1c(u, v) = I1(u − ε12_u, v − ε12_v)` and `I3c(u, v) = I3(u + ε32_u, v + ε32_v)`.
pub fn correct_camera_pixels(triple: &FrameTriple, errors: &PixelErrorMaps) -> Result<CorrectedFrames> {
    let dims = triple.dims();
    errors.e12_u.ensure_dims(dims)?;
    let (w, h) = dims;
    let px = Image::from_fn_par(w, h, |x, y| {
        let (xi, yi) = (x as i64, y as i64);
        let a = triple
            .i1
            .get_checked(xi - *errors.e12_u.get(x, y) as i64, yi - *errors.e12_v.get(x, y) as i64);
        let b = triple
            .i3
            .get_checked(xi + *errors.e32_u.get(x, y) as i64, yi + *errors.e32_v.get(x, y) as i64);
        match (a, b) {
            (Some(&a), Some(&b)) => (a, b, *errors.valid.get(x, y)),
            _ => (0.0, 0.0, false),
        }
    });
    Ok(CorrectedFrames {
        i1: px.map(|p| p.0),
        i3: px.map(|p| p.1),
        keep: px.map(|p| p.2),
    })
}

/// Per-pixel phase shift errors (rad) of frames 1 and 3 relative to frame 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftErrorMaps {
    pub e12: ImageF64,
    pub e32: ImageF64,
    pub valid: Mask,
}

/// `ε^up = (2π/λ) (∂u^p/∂x Δx + ∂u^p/∂y Δy + ∂u^p/∂z Δz)`, left unrounded.
pub fn phase_shift_errors(
    projector: &ProjectionMatrix,
    coarse: &Image<Option<WorldPoint>>,
    d12: &Displacement,
    d32: &Displacement,
    pitch: f64,
) -> PhaseShiftErrorMaps {
    let (w, h) = coarse.dims();
    let scale = TAU / pitch;
    let px = Image::from_fn_par(w, h, |x, y| {
        let p = (*coarse.get(x, y))?;
        let j = projector.jacobian(&p).ok()?;
        Some((scale * j.du.dot(&d12.0), scale * j.du.dot(&d32.0)))
    });
    PhaseShiftErrorMaps {
        e12: px.map(|e| e.map_or(0.0, |e| e.0)),
        e32: px.map(|e| e.map_or(0.0, |e| e.1)),
        valid: px.map(Option::is_some),
    }
}

/// Exact wrapped phase for shifts `δ1` (frame 1, behind) and `δ3` (frame 3, ahead).
///
/// Returns `(φ, I'')`. With `A1 = I3 − I2`, `A2 = I2 − I1`, `A3 = I1 − I3`:
/// `φ = atan2(A1 cos δ1 + A2 cos δ3 + A3, −A1 sin δ1 + A2 sin δ3)`. Both arguments
/// equal `I'' K (sin φ, cos φ)` with `K = sin δ1 + sin δ3 − sin(δ1 + δ3)`.
pub fn corrected_phase_general(i1: f64, i2: f64, i3: f64, delta1: f64, delta3: f64) -> Result<(f64, f64)> {
    if delta1.abs() < MIN_SHIFT
        || delta3.abs() < MIN_SHIFT
        || ((delta1 + delta3).rem_euclid(TAU)).min(TAU - (delta1 + delta3).rem_euclid(TAU)) < MIN_SHIFT
    {
        return Err(Error::DegeneratePhaseShift { delta1, delta3 });
    }
    let a1 = i3 - i2;
    let a2 = i2 - i1;
    let a3 = i1 - i3;
    let (s1, c1) = delta1.sin_cos();
    let (s3, c3) = delta3.sin_cos();
    let num = a1 * c1 + a2 * c3 + a3;
    let den = -a1 * s1 + a2 * s3;
    let k = s1 + s3 - (delta1 + delta3).sin();
    if k.abs() < MIN_SHIFT {
        return Err(Error::DegeneratePhaseShift { delta1, delta3 });
    }
    Ok((atan2_wrapped(num, den), num.hypot(den) / k.abs()))
}

/// Wrapped phase when both frames share one shift error `ε` (constant velocity).
///
/// `φ = atan2((2 + cos ε + √3 sin ε)(I1 − I3), (√3 cos ε − sin ε)(2I2 − I1 − I3))`.
pub fn corrected_phase_uniform(i1: f64, i2: f64, i3: f64, eps: f64) -> Result<(f64, f64)> {
    let (s, c) = eps.sin_cos();
    let sqrt3 = 3f64.sqrt();
    let gain_sin = 2.0 + c + sqrt3 * s; // 2 (1 − cos δ)
    let gain_cos = sqrt3 * c - s; // 2 sin δ
    if gain_cos.abs() < MIN_SHIFT || gain_sin.abs() < MIN_SHIFT {
        let d = NOMINAL_SHIFT + eps;
        return Err(Error::DegeneratePhaseShift { delta1: d, delta3: d });
    }
    let num = gain_sin * (i1 - i3);
    let den = gain_cos * (2.0 * i2 - i1 - i3);
    Ok((atan2_wrapped(num, den), num.hypot(den) / (gain_sin * gain_cos).abs()))
}

/// Per-pixel variant of [`corrected_phase_general`]; zero shift errors reduce to the
/// conventional formula exactly.
fn general_or_conventional(i1: f64, i2: f64, i3: f64, e12: f64, e32: f64) -> Result<(f64, f64)> {
    if e12 == 0.0 && e32 == 0.0 {
        return Ok(conventional_phase(i1, i2, i3));
    }
    corrected_phase_general(i1, i2, i3, NOMINAL_SHIFT + e12, NOMINAL_SHIFT + e32)
}

fn uniform_or_conventional(i1: f64, i2: f64, i3: f64, eps: f64) -> Result<(f64, f64)> {
    if eps == 0.0 {
        return Ok(conventional_phase(i1, i2, i3));
    }
    corrected_phase_uniform(i1, i2, i3, eps)
}

/// Map form of [`corrected_phase_general`] taking the total shifts `δ1`, `δ3`.
/// Degenerate pixels and pixels outside `keep` are masked.
pub fn corrected_wrapped_phase_general(
    i1c: &ImageF32,
    i2: &ImageF32,
    i3c: &ImageF32,
    delta1: &ImageF64,
    delta3: &ImageF64,
    modulation_threshold: f64,
    keep: Option<&Mask>,
) -> Result<WrappedPhaseMap> {
    let dims = i2.dims();
    for d in [i1c.dims(), i3c.dims(), delta1.dims(), delta3.dims()] {
        if d != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: d,
            });
        }
    }
    let (w, h) = dims;
    let px = Image::from_fn_par(w, h, |x, y| {
        corrected_phase_general(
            *i1c.get(x, y) as f64,
            *i2.get(x, y) as f64,
            *i3c.get(x, y) as f64,
            *delta1.get(x, y),
            *delta3.get(x, y),
        )
        .unwrap_or((f64::NAN, f64::NAN))
    });
    Ok(assemble_wrapped(&px, modulation_threshold, keep))
}

/// Map form of [`corrected_phase_uniform`].
pub fn corrected_wrapped_phase_uniform(
    i1c: &ImageF32,
    i2: &ImageF32,
    i3c: &ImageF32,
    eps: &ImageF64,
    modulation_threshold: f64,
    keep: Option<&Mask>,
) -> Result<WrappedPhaseMap> {
    let dims = i2.dims();
    for d in [i1c.dims(), i3c.dims(), eps.dims()] {
        if d != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: d,
            });
        }
    }
    let (w, h) = dims;
    let px = Image::from_fn_par(w, h, |x, y| {
        corrected_phase_uniform(
            *i1c.get(x, y) as f64,
            *i2.get(x, y) as f64,
            *i3c.get(x, y) as f64,
            *eps.get(x, y),
        )
        .unwrap_or((f64::NAN, f64::NAN))
    });
    Ok(assemble_wrapped(&px, modulation_threshold, keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    /// No correction rounds.
    Conventional,
    /// One shared displacement (that of frames 2→3) for both frame pairs.
    Uniform,
    /// Independent errors for frames 1→2 and 2→3.
    #[default]
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub iterations: usize,
    pub mode: CorrectionMode,
    pub z_min_mm: f64,
    pub theta_deg: f64,
    /// Rotation axis of the reference plane (camera frame).
    pub theta_axis: [f64; 3],
    pub lambda_px: f64,
    /// Negates the displacement, flipping the fetch and shift-error signs.
    pub sign_flip: bool,
    pub modulation_threshold: f64,
    /// Rig travel direction in the camera frame.
    pub direction: [f64; 3],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iterations: 2,
            mode: CorrectionMode::General,
            z_min_mm: 440.0,
            theta_deg: 0.0,
            theta_axis: [0.0, 1.0, 0.0],
            lambda_px: 18.0,
            sign_flip: false,
            modulation_threshold: DEFAULT_MODULATION_THRESHOLD,
            direction: [1.0, 0.0, 0.0],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_min_mm > 0.0) {
            return Err(Error::invalid("z_min_mm", "must be > 0"));
        }
        if !(self.lambda_px > 0.0) {
            return Err(Error::invalid("lambda_px", "must be > 0"));
        }
        if !(self.modulation_threshold >= 0.0) {
            return Err(Error::invalid("modulation_threshold", "must be >= 0"));
        }
        if !self.theta_deg.is_finite() {
            return Err(Error::invalid("theta_deg", "must be finite"));
        }
        let d = Vector3::from(self.direction);
        if (d.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("direction", "must be a unit vector"));
        }
        Ok(())
    }

    pub fn direction(&self) -> Vector3<f64> {
        Vector3::from(self.direction)
    }

    pub fn correction_rounds(&self) -> usize {
        match self.mode {
            CorrectionMode::Conventional => 0,
            _ => self.iterations,
        }
    }

    pub fn reference_plane(&self, calib: &CalibrationData) -> Result<ReferencePlane> {
        build_reference_plane(
            calib,
            self.z_min_mm,
            self.theta_deg.to_radians(),
            Vector3::from(self.theta_axis),
        )
    }
}

/// Scene-point displacements `(Δ12, Δ32)` implied by the encoder readings.
///
/// The rig moves by `+direction · d`, so scene points move by the opposite amount in
/// the camera frame; `sign_flip` reverses this.
pub fn frame_displacements(triple: &FrameTriple, config: &PipelineConfig) -> (Displacement, Displacement) {
    let dir = if config.sign_flip {
        config.direction()
    } else {
        -config.direction()
    };
    let d12 = Displacement::along(&dir, triple.d[0], triple.d[1]);
    let d32 = Displacement::along(&dir, triple.d[1], triple.d[2]);
    match config.mode {
        CorrectionMode::Uniform => (d32, d32),
        _ => (d12, d32),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    /// RMS 3-D shift of the points relative to the previous round (mm).
    pub rmse_mm: f64,
    /// RMS change of the wrapped phase relative to the previous round (rad).
    pub rms_phase_change: f64,
    /// Pixels of the previous round's cloud dropped by camera pixel correction.
    pub discarded_px: usize,
    pub valid_px: usize,
    pub dropped_px: usize,
}

/// Intermediate maps and the final cloud of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub cloud: PointCloud,
    pub rounds: Vec<RoundDiagnostics>,
    pub reference: ReferencePlane,
    pub min_phase: MinPhaseMap,
    pub wrapped: WrappedPhaseMap,
    pub orders: FringeOrderMap,
    pub absolute: AbsolutePhaseMap,
    /// Clouds of every round, starting with the conventional result.
    pub history: Vec<PointCloud>,
}

impl PipelineOutput {
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("round,rmse_mm,discarded_px\n");
        for r in &self.rounds {
            out.push_str(&format!("{},{:.6},{}\n", r.round, r.rmse_mm, r.discarded_px));
        }
        out
    }
}

fn rms_cloud_shift(prev: &PointCloud, next: &PointCloud) -> f64 {
    let grid = prev.to_grid();
    let (mut sum, mut n) = (0.0, 0usize);
    for p in &next.points {
        if let Some(q) = grid.get(p.pixel.0 as usize, p.pixel.1 as usize) {
            sum += (p.position - q).norm_squared();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn rms_phase_change(prev: &WrappedPhaseMap, next: &WrappedPhaseMap) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..prev.phase.len() {
        if prev.mask.as_slice()[i] && next.mask.as_slice()[i] {
            let d = crate::psp::wrap_phase(next.phase.as_slice()[i] - prev.phase.as_slice()[i]);
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// One correction round driven by `coarse`: pixel correction, phase-shift
/// correction and the corrected wrapped phase, plus the number of `coarse`
/// pixels discarded by the pixel correction.
pub fn correct_round(
    triple: &FrameTriple,
    calib: &CalibrationData,
    coarse: &PointCloud,
    config: &PipelineConfig,
) -> Result<(WrappedPhaseMap, usize)> {
    let (d12, d32) = frame_displacements(triple, config);
    let raw = coarse.to_grid();
    let grid = fill_gaps(&raw, GAP_FILL_RADIUS);
    let pixel_errors = camera_pixel_errors(calib.camera_matrix(), &grid, &d12, &d32);
    let corrected = correct_camera_pixels(triple, &pixel_errors)?;
    let shift_errors = phase_shift_errors(calib.projector_matrix(), &grid, &d12, &d32, config.lambda_px);
    let discarded = raw
        .as_slice()
        .iter()
        .zip(corrected.keep.as_slice())
        .filter(|(p, k)| p.is_some() && !**k)
        .count();
    let (w, h) = triple.dims();
    let uniform = config.mode == CorrectionMode::Uniform;
    let px = Image::from_fn_par(w, h, |x, y| {
        let (a, b, c) = (
            *corrected.i1.get(x, y) as f64,
            *triple.i2.get(x, y) as f64,
            *corrected.i3.get(x, y) as f64,
        );
        let (e12, e32) = (*shift_errors.e12.get(x, y), *shift_errors.e32.get(x, y));
        let r = if uniform {
            uniform_or_conventional(a, b, c, e32)
        } else {
            general_or_conventional(a, b, c, e12, e32)
        };
        r.unwrap_or((f64::NAN, f64::NAN))
    });
    Ok((
        assemble_wrapped(&px, config.modulation_threshold, Some(&corrected.keep)),
        discarded,
    ))
}

/// Conventional reconstruction followed by `iterations` correction rounds, each
/// using the previous round's cloud as the coarse reference.
pub fn run_pipeline(triple: &FrameTriple, calib: &CalibrationData, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    triple.i1.ensure_dims(calib.camera_resolution)?;
    let reference = config.reference_plane(calib)?;
    let min_phase = min_phase_map(calib, &reference, config.lambda_px)?;

    let mut wrapped = wrapped_phase_conventional(&triple.i1, &triple.i2, &triple.i3, config.modulation_threshold)?;
    let (mut orders, mut absolute, mut cloud) = unwrap_and_reconstruct(&wrapped, &min_phase, calib, config.lambda_px)?;
    let mut rounds = vec![RoundDiagnostics {
        round: 0,
        rmse_mm: 0.0,
        rms_phase_change: 0.0,
        discarded_px: 0,
        valid_px: cloud.len(),
        dropped_px: cloud.dropped,
    }];
    let mut history = vec![cloud.clone()];

    for round in 1..=config.correction_rounds() {
        let (next_wrapped, discarded) = correct_round(triple, calib, &cloud, config)?;
        let (next_orders, next_abs, next_cloud) =
            unwrap_and_reconstruct(&next_wrapped, &min_phase, calib, config.lambda_px)?;
        rounds.push(RoundDiagnostics {
            round,
            rmse_mm: rms_cloud_shift(&cloud, &next_cloud),
            rms_phase_change: rms_phase_change(&wrapped, &next_wrapped),
            discarded_px: discarded,
            valid_px: next_cloud.len(),
            dropped_px: next_cloud.dropped,
        });
        wrapped = next_wrapped;
        orders = next_orders;
        absolute = next_abs;
        cloud = next_cloud;
        history.push(cloud.clone());
    }

    Ok(PipelineOutput {
        cloud,
        rounds,
        reference,
        min_phase,
        wrapped,
        orders,
        absolute,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compose_projection, Extrinsics, Intrinsics};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn frontal(f: f64) -> ProjectionMatrix {
        compose_projection(&Intrinsics::new(f, f, 0.0, 0.0).unwrap(), &Extrinsics::identity())
    }

    fn synth(mean: f64, modulation: f64, phi: f64, d1: f64, d3: f64) -> (f64, f64, f64) {
        (
            mean + modulation * (phi - d1).cos(),
            mean + modulation * phi.cos(),
            mean + modulation * (phi + d3).cos(),
        )
    }

    fn single_point(p: WorldPoint) -> Image<Option<WorldPoint>> {
        Image::filled(1, 1, Some(p))
    }

    fn ramp(w: usize, h: usize, offset: f32) -> ImageF32 {
        Image::from_fn_par(w, h, |x, y| offset + x as f32 + 10.0 * y as f32)
    }

    #[test]
    fn displacement_examples() {
        let log = Trajectory::uniform(80.0, 1.0, 1000.0, Vector3::x()).unwrap();
        let zero = displacement_between(&log, 0.3, 0.3, &Vector3::x()).unwrap();
        assert!(zero.is_zero());
        let d = displacement_between(&log, 0.0, 1.0 / 120.0, &Vector3::x()).unwrap();
        assert_abs_diff_eq!(d.0, Vector3::new(0.6667, 0.0, 0.0), epsilon = 1e-4);
        let d = Displacement::along(&Vector3::z(), 1.0, 3.0);
        assert_eq!(d.0, Vector3::new(0.0, 0.0, 2.0));
        assert!(matches!(
            displacement_between(&log, 0.0, 2.0, &Vector3::x()),
            Err(Error::OutOfTrajectory { .. })
        ));
    }

    #[test]
    fn pixel_errors_from_jacobian() {
        let cam = frontal(800.0);
        let grid = single_point(Vector3::new(0.0, 0.0, 500.0));
        let zero = camera_pixel_errors(&cam, &grid, &Displacement::zero(), &Displacement::zero());
        assert_eq!(*zero.e12_u.get(0, 0), 0);
        assert_eq!(*zero.e32_v.get(0, 0), 0);
        let d = Displacement(Vector3::new(0.6667, 0.0, 0.0));
        let e = camera_pixel_errors(&cam, &grid, &d, &d);
        assert_eq!(*e.e12_u.get(0, 0), 1);
        assert_eq!(*e.e32_u.get(0, 0), 1);
        assert_eq!(*e.e12_v.get(0, 0), 0);
        assert!(*e.valid.get(0, 0));
    }

    #[test]
    fn missing_coarse_point_is_invalid() {
        let grid: Image<Option<WorldPoint>> = Image::filled(2, 1, None);
        let d = Displacement(Vector3::new(1.0, 0.0, 0.0));
        let e = camera_pixel_errors(&frontal(800.0), &grid, &d, &d);
        assert_eq!(e.valid.count(), 0);
    }

    fn uniform_errors(w: usize, h: usize, e12_u: i32, e32_u: i32) -> PixelErrorMaps {
        PixelErrorMaps {
            e12_u: Image::filled(w, h, e12_u),
            e12_v: Image::filled(w, h, 0),
            e32_u: Image::filled(w, h, e32_u),
            e32_v: Image::filled(w, h, 0),
            valid: Image::filled(w, h, true),
        }
    }

    fn triple(w: usize, h: usize) -> FrameTriple {
        FrameTriple::new(
            ramp(w, h, 0.0),
            ramp(w, h, 0.5),
            ramp(w, h, 0.25),
            [0.0, 1.0, 2.0],
            [0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn zero_pixel_errors_are_identity() {
        let t = triple(5, 3);
        let c = correct_camera_pixels(&t, &uniform_errors(5, 3, 0, 0)).unwrap();
        let bits = |i: &ImageF32| i.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&c.i1), bits(&t.i1));
        assert_eq!(bits(&c.i3), bits(&t.i3));
        assert_eq!(c.keep.count(), 15);
    }

    #[test]
    fn unit_pixel_error_shifts_one_column() {
        let t = triple(5, 3);
        let c = correct_camera_pixels(&t, &uniform_errors(5, 3, 1, 1)).unwrap();
        for y in 0..3 {
            assert!(!*c.keep.get(0, y));
            assert!(!*c.keep.get(4, y));
            for x in 1..4 {
                assert!(*c.keep.get(x, y));
                assert_eq!(c.i1.get(x, y), t.i1.get(x - 1, y));
                assert_eq!(c.i3.get(x, y), t.i3.get(x + 1, y));
            }
        }
    }

    #[test]
    fn pixel_correction_checks_dims() {
        let t = triple(5, 3);
        assert!(correct_camera_pixels(&t, &uniform_errors(4, 3, 0, 0)).is_err());
    }

    #[test]
    fn phase_shift_error_examples() {
        let proj = frontal(600.0);
        let grid = single_point(Vector3::new(0.0, 0.0, 500.0));
        let zero = phase_shift_errors(&proj, &grid, &Displacement::zero(), &Displacement::zero(), 18.0);
        assert_eq!(*zero.e12.get(0, 0), 0.0);
        assert_eq!(*zero.e32.get(0, 0), 0.0);
        let d = Displacement(Vector3::new(0.6667, 0.0, 0.0));
        let e = phase_shift_errors(&proj, &grid, &d, &d, 18.0);
        assert_abs_diff_eq!(*e.e12.get(0, 0), TAU / 18.0 * 1.2 * 0.6667, epsilon = 1e-12);
        assert_abs_diff_eq!(*e.e32.get(0, 0), 0.2793, epsilon = 1e-4);
    }

    #[test]
    fn general_round_trip_example() {
        let (d1, d3) = (NOMINAL_SHIFT + 0.10, NOMINAL_SHIFT + 0.15);
        let (i1, i2, i3) = synth(0.5, 0.4, 1.0, d1, d3);
        let (phi, modulation) = corrected_phase_general(i1, i2, i3, d1, d3).unwrap();
        assert_abs_diff_eq!(phi, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(modulation, 0.4, epsilon = 1e-9);
    }

    #[test]
    fn general_sweep_has_no_ripple() {
        let (d1, d3) = (NOMINAL_SHIFT + 0.10, NOMINAL_SHIFT - 0.07);
        let mut worst: f64 = 0.0;
        for k in 0..720 {
            let phi = -PI + TAU * (k as f64 + 0.5) / 720.0;
            let (i1, i2, i3) = synth(0.5, 0.4, phi, d1, d3);
            let (got, _) = corrected_phase_general(i1, i2, i3, d1, d3).unwrap();
            worst = worst.max(wrap_diff(got, phi));
        }
        assert!(worst < 1e-9, "max error {worst}");
    }

    fn wrap_diff(a: f64, b: f64) -> f64 {
        crate::psp::wrap_phase(a - b).abs()
    }

    #[test]
    fn general_nominal_matches_conventional() {
        let (i1, i2, i3) = (0.83, 0.41, 0.12);
        let (a, ma) = corrected_phase_general(i1, i2, i3, NOMINAL_SHIFT, NOMINAL_SHIFT).unwrap();
        let (b, mb) = conventional_phase(i1, i2, i3);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(ma, mb, epsilon = 1e-12);
    }

    #[test]
    fn general_degenerate_shifts() {
        let degenerate = |d1: f64, d3: f64| {
            matches!(
                corrected_phase_general(0.5, 0.6, 0.7, d1, d3),
                Err(Error::DegeneratePhaseShift { .. })
            )
        };
        assert!(degenerate(0.0, 1.0));
        assert!(degenerate(1.0, 5e-7));
        assert!(degenerate(PI, PI));
        assert!(degenerate(2.0, TAU - 2.0 + 1e-8));
        assert!(!degenerate(NOMINAL_SHIFT, NOMINAL_SHIFT));
    }

    #[test]
    fn uniform_round_trip_and_reduction() {
        let eps = 0.2;
        let d = NOMINAL_SHIFT + eps;
        let (i1, i2, i3) = synth(0.5, 0.4, -2.3, d, d);
        let (phi, modulation) = corrected_phase_uniform(i1, i2, i3, eps).unwrap();
        assert_abs_diff_eq!(phi, -2.3, epsilon = 1e-9);
        assert_abs_diff_eq!(modulation, 0.4, epsilon = 1e-9);

        let (a, _) = corrected_phase_uniform(0.83, 0.41, 0.12, 0.0).unwrap();
        let (b, _) = conventional_phase(0.83, 0.41, 0.12);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn uniform_degenerate_near_pi_over_three() {
        assert!(matches!(
            corrected_phase_uniform(0.5, 0.6, 0.7, PI / 3.0),
            Err(Error::DegeneratePhaseShift { .. })
        ));
        assert!(corrected_phase_uniform(0.5, 0.6, 0.7, PI / 3.0 - 0.01).is_ok());
    }

    #[test]
    fn zero_errors_take_conventional_path_exactly() {
        let (i1, i2, i3) = (0.7, 0.2, 0.45);
        let conv = conventional_phase(i1, i2, i3);
        assert_eq!(general_or_conventional(i1, i2, i3, 0.0, 0.0).unwrap(), conv);
        assert_eq!(uniform_or_conventional(i1, i2, i3, 0.0).unwrap(), conv);
    }

    #[test]
    fn wrapped_map_masks_degenerate_and_rejected_pixels() {
        let (i1, i2, i3) = synth(0.5, 0.4, 0.3, NOMINAL_SHIFT, NOMINAL_SHIFT);
        let img = |v: f64| ImageF32::filled(3, 1, v as f32);
        let delta1 = ImageF64::from_vec(3, 1, vec![NOMINAL_SHIFT, 0.0, NOMINAL_SHIFT]).unwrap();
        let delta3 = ImageF64::filled(3, 1, NOMINAL_SHIFT);
        let keep = Mask::from_vec(3, 1, vec![true, true, false]).unwrap();
        let map =
            corrected_wrapped_phase_general(&img(i1), &img(i2), &img(i3), &delta1, &delta3, 0.02, Some(&keep)).unwrap();
        assert_eq!(map.mask.as_slice(), &[true, false, false]);
        assert_abs_diff_eq!(*map.phase.get(0, 0), 0.3, epsilon = 1e-6);

        let eps = ImageF64::filled(2, 1, 0.0);
        assert!(matches!(
            corrected_wrapped_phase_uniform(&img(i1), &img(i2), &img(i3), &eps, 0.02, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gap_fill_borrows_within_radius() {
        let mut grid: Image<Option<u32>> = Image::filled(20, 1, None);
        grid.set(0, 0, Some(7));
        grid.set(9, 0, Some(9));
        let filled = fill_gaps(&grid, GAP_FILL_RADIUS);
        assert_eq!(*filled.get(3, 0), Some(7));
        assert_eq!(*filled.get(5, 0), Some(9));
        assert_eq!(*filled.get(14, 0), Some(9));
        assert_eq!(*filled.get(15, 0), None);
    }

    #[test]
    fn gap_fill_tie_break_is_deterministic() {
        let mut grid: Image<Option<u32>> = Image::filled(3, 3, None);
        grid.set(0, 1, Some(1));
        grid.set(2, 1, Some(2));
        grid.set(1, 0, Some(3));
        // Equal distances: the upper neighbour (dy = −1) wins.
        assert_eq!(*fill_gaps(&grid, 5).get(1, 1), Some(3));
    }

    #[test]
    fn frame_displacements_follow_rig_motion() {
        let t = FrameTriple::new(
            ramp(2, 2, 0.0),
            ramp(2, 2, 0.0),
            ramp(2, 2, 0.0),
            [0.0, 0.1, 0.2],
            [0.0, 0.5, 1.5],
        )
        .unwrap();
        let mut config = PipelineConfig::default();
        let (d12, d32) = frame_displacements(&t, &config);
        assert_eq!(d12.0, Vector3::new(-0.5, 0.0, 0.0));
        assert_eq!(d32.0, Vector3::new(-1.0, 0.0, 0.0));
        config.sign_flip = true;
        assert_eq!(frame_displacements(&t, &config).0 .0, Vector3::new(0.5, 0.0, 0.0));
        config.mode = CorrectionMode::Uniform;
        let (a, b) = frame_displacements(&t, &config);
        assert_eq!(a, b);
        assert_eq!(a.0, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn frame_triple_validation() {
        let a = ramp(2, 2, 0.0);
        assert!(FrameTriple::new(a.clone(), a.clone(), a.clone(), [0.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(FrameTriple::new(a.clone(), ramp(3, 2, 0.0), a, [0.0, 1.0, 2.0], [0.0; 3]).is_err());
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let config = PipelineConfig {
            iterations: 3,
            mode: CorrectionMode::Uniform,
            theta_deg: 10.0,
            sign_flip: true,
            ..PipelineConfig::default()
        };
        let text = serde_json::to_string(&config).unwrap();
        assert!(text.contains("\"uniform\""));
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);

        let partial: PipelineConfig = serde_json::from_str(r#"{"iterations": 0}"#).unwrap();
        assert_eq!(partial.mode, CorrectionMode::General);
        assert_eq!(partial.correction_rounds(), 0);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"iteratons": 1}"#).is_err());

        let mut bad = PipelineConfig {
            direction: [1.0, 1.0, 0.0],
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        bad = PipelineConfig {
            z_min_mm: 0.0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        bad = PipelineConfig {
            lambda_px: f64::NAN,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            PipelineConfig {
                mode: CorrectionMode::Conventional,
                ..PipelineConfig::default()
            }
            .correction_rounds(),
            0
        );
    }

    fn shift_error() -> impl Strategy<Value = f64> {
        -0.8f64..0.8
    }

    proptest! {
        #[test]
        fn prop_reductions_match_conventional(i1 in 0.0f64..1.0, i2 in 0.0f64..1.0, i3 in 0.0f64..1.0) {
            prop_assume!((i1 - i3).abs() + (2.0 * i2 - i1 - i3).abs() > 1e-6);
            let (c, _) = conventional_phase(i1, i2, i3);
            let (g, _) = corrected_phase_general(i1, i2, i3, NOMINAL_SHIFT, NOMINAL_SHIFT).unwrap();
            let (u, _) = corrected_phase_uniform(i1, i2, i3, 0.0).unwrap();
            prop_assert!(wrap_diff(g, c) < 1e-12);
            prop_assert!(wrap_diff(u, c) < 1e-12);
        }

        #[test]
        fn prop_general_round_trip(
            mean in 0.2f64..0.8,
            modulation in 0.05f64..0.5,
            phi in -3.1f64..3.1,
            e1 in shift_error(),
            e3 in shift_error(),
        ) {
            let (d1, d3) = (NOMINAL_SHIFT + e1, NOMINAL_SHIFT + e3);
            let (i1, i2, i3) = synth(mean, modulation, phi, d1, d3);
            let (got, m) = corrected_phase_general(i1, i2, i3, d1, d3).unwrap();
            prop_assert!(wrap_diff(got, phi) < 1e-9);
            prop_assert!((m - modulation).abs() < 1e-9);
        }

        #[test]
        fn prop_uniform_round_trip(phi in -3.1f64..3.1, eps in -0.8f64..0.8) {
            let d = NOMINAL_SHIFT + eps;
            let (i1, i2, i3) = synth(0.5, 0.3, phi, d, d);
            let (got, _) = corrected_phase_uniform(i1, i2, i3, eps).unwrap();
            prop_assert!(wrap_diff(got, phi) < 1e-9);
        }
    }
}
