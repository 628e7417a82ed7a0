//! Conventional three-step phase retrieval and phase unwrapping against a
//! virtual minimum-depth reference plane.

use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Unit, Vector3};
use rayon::prelude::*;

use crate::cloud::{CloudPoint, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{triangulate, CalibrationData, PlaneFit};
use crate::image::{pixel_center, Image, ImageF32, ImageF64, Mask};
use crate::patterns::{absolute_phase, phase_to_column};

/// Default minimum modulation `I''` for a pixel to be trusted.
pub const DEFAULT_MODULATION_THRESHOLD: f64 = 0.02;

const GRAZING_ANGLE: f64 = 1e-6;

/// Wraps an angle into `(−π, π]`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    x - TAU * ((x - PI) / TAU).ceil()
}

/// Four-quadrant arctangent folded into `(−π, π]`.
#[inline]
pub(crate) fn atan2_wrapped(num: f64, den: f64) -> f64 {
    let a = num.atan2(den);
    if a <= -PI {
        PI
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrappedPhaseMap {
    pub phase: ImageF64,
    pub modulation: ImageF64,
    pub mask: Mask,
}

impl WrappedPhaseMap {
    pub fn dims(&self) -> (usize, usize) {
        self.phase.dims()
    }
}

/// `(φ, I'')` from three samples at nominal shifts `−2π/3, 0, +2π/3`.
#[inline]
pub fn conventional_phase(i1: f64, i2: f64, i3: f64) -> (f64, f64) {
    let num = 3f64.sqrt() * (i1 - i3);
    let den = 2.0 * i2 - i1 - i3;
    (atan2_wrapped(num, den), num.hypot(den) / 3.0)
}

pub fn wrapped_phase_conventional(
    i1: &ImageF32,
    i2: &ImageF32,
    i3: &ImageF32,
    modulation_threshold: f64,
) -> Result<WrappedPhaseMap> {
    i2.ensure_dims(i1.dims())?;
    i3.ensure_dims(i1.dims())?;
    let (w, h) = i1.dims();
    let px = Image::from_fn_par(w, h, |x, y| {
        conventional_phase(*i1.get(x, y) as f64, *i2.get(x, y) as f64, *i3.get(x, y) as f64)
    });
    Ok(assemble_wrapped(&px, modulation_threshold, None))
}

/// Splits per-pixel `(phase, modulation)` into a map, masking low modulation and
/// any pixel rejected by `extra`.
pub(crate) fn assemble_wrapped(px: &Image<(f64, f64)>, threshold: f64, extra: Option<&Mask>) -> WrappedPhaseMap {
    let phase = px.map(|p| p.0);
    let modulation = px.map(|p| p.1);
    let mut mask = px.map(|&(ph, m)| ph.is_finite() && m.is_finite() && m >= threshold);
    if let Some(extra) = extra {
        for (m, &e) in mask.as_mut_slice().iter_mut().zip(extra.as_slice()) {
            *m &= e;
        }
    }
    WrappedPhaseMap {
        phase,
        modulation,
        mask,
    }
}

/// Virtual reference plane `normal · p = offset` with its per-pixel depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlane {
    pub z_min: f64,
    pub theta: f64,
    pub axis: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub depth: ImageF64,
}

/// Index of the camera pixel used as the reference-plane centre.
pub fn central_pixel(calib: &CalibrationData) -> (usize, usize) {
    (calib.camera_resolution.0 / 2, calib.camera_resolution.1 / 2)
}

/// Builds the plane `z = z_min`, optionally rotated by `theta` about `axis` through
/// the camera centre and then shifted along z so that its depth at the central
/// pixel is again `z_min`.
pub fn build_reference_plane(
    calib: &CalibrationData,
    z_min: f64,
    theta: f64,
    axis: Vector3<f64>,
) -> Result<ReferencePlane> {
    if !(z_min > 0.0) {
        return Err(Error::invalid("z_min", "must be > 0"));
    }
    let (cx, cy) = central_pixel(calib);
    let center_ray = calib.camera_ray(pixel_center(cx), pixel_center(cy));
    let center = center_ray * z_min;
    let mut normal = Vector3::z();
    let mut offset = z_min;
    let mut axis_unit = axis;
    if theta != 0.0 {
        let ax = Unit::try_new(axis, 1e-12).ok_or_else(|| Error::invalid("axis", "must be nonzero"))?;
        axis_unit = ax.into_inner();
        let rot = Rotation3::from_axis_angle(&ax, theta);
        normal = rot * normal;
        offset = normal.dot(&(rot * center));
        if normal.z.abs() < GRAZING_ANGLE.sin() {
            return Err(Error::GrazingPlane {
                angle: normal.z.abs().asin(),
            });
        }
        // Shift along z until the central ray meets the plane at depth z_min.
        let shift = (z_min * normal.dot(&center_ray) - offset) / normal.z;
        offset += shift * normal.z;
    }
    let (w, h) = calib.camera_resolution;
    let limit = GRAZING_ANGLE.sin();
    let depth = Image::from_fn_par(w, h, |x, y| {
        let d = calib.camera_ray(pixel_center(x), pixel_center(y));
        let denom = normal.dot(&d);
        if denom.abs() / d.norm() < limit {
            f64::NAN
        } else {
            offset / denom
        }
    });
    if depth.as_slice().iter().any(|z| z.is_nan()) {
        return Err(Error::GrazingPlane { angle: GRAZING_ANGLE });
    }
    if depth.as_slice().iter().any(|&z| !(z > 0.0)) {
        return Err(Error::InvalidReferencePlane(
            "plane lies behind the camera for some pixels".into(),
        ));
    }
    Ok(ReferencePlane {
        z_min,
        theta,
        axis: axis_unit,
        normal,
        offset,
        depth,
    })
}

/// Rotation `(theta, axis)` that turns the frontal plane normal `+z` onto the
/// normal of a fitted plane.
pub fn tilt_from_plane(fit: &PlaneFit) -> (f64, Vector3<f64>) {
    let n = if fit.normal.z < 0.0 { -fit.normal } else { fit.normal };
    let axis = Vector3::z().cross(&n);
    let s = axis.norm();
    if s < 1e-15 {
        return (0.0, Vector3::y());
    }
    (s.atan2(n.z), axis / s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinPhaseMap(pub ImageF64);

pub fn min_phase_map(calib: &CalibrationData, plane: &ReferencePlane, pitch: f64) -> Result<MinPhaseMap> {
    plane.depth.ensure_dims(calib.camera_resolution)?;
    let (w, h) = calib.camera_resolution;
    let proj = calib.projector_matrix();
    let rows: Vec<Result<Vec<f64>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let p = calib.camera_ray(pixel_center(x), pixel_center(y)) * *plane.depth.get(x, y);
                    let pp = proj.project(&p)?;
                    if pp.s <= 0.0 {
                        return Err(Error::DegenerateProjection { scale: pp.s });
                    }
                    Ok(absolute_phase(pitch, pp.u))
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(w * h);
    for row in rows {
        data.extend(row?);
    }
    Ok(MinPhaseMap(Image::from_vec(w, h, data)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeOrderMap {
    pub order: Image<i32>,
    pub mask: Mask,
}

/// `k = ceil((Φ_min − φ) / 2π)`.
#[inline]
pub fn fringe_order_at(min_phase: f64, phase: f64) -> i32 {
    ((min_phase - phase) / TAU).ceil() as i32
}

pub fn fringe_order(min_phase: &MinPhaseMap, wrapped: &WrappedPhaseMap) -> Result<FringeOrderMap> {
    min_phase.0.ensure_dims(wrapped.dims())?;
    let (w, h) = wrapped.dims();
    let order = Image::from_fn_par(w, h, |x, y| {
        if *wrapped.mask.get(x, y) {
            fringe_order_at(*min_phase.0.get(x, y), *wrapped.phase.get(x, y))
        } else {
            0
        }
    });
    Ok(FringeOrderMap {
        order,
        mask: wrapped.mask.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsolutePhaseMap {
    pub phase: ImageF64,
    pub mask: Mask,
}

/// `Φ = φ + 2πk` on the valid pixels; NaN elsewhere.
pub fn unwrap(wrapped: &WrappedPhaseMap, orders: &FringeOrderMap) -> Result<AbsolutePhaseMap> {
    orders.order.ensure_dims(wrapped.dims())?;
    let (w, h) = wrapped.dims();
    let mask = Image::from_fn_par(w, h, |x, y| *wrapped.mask.get(x, y) && *orders.mask.get(x, y));
    let phase = Image::from_fn_par(w, h, |x, y| {
        if *mask.get(x, y) {
            wrapped.phase.get(x, y) + TAU * *orders.order.get(x, y) as f64
        } else {
            f64::NAN
        }
    });
    Ok(AbsolutePhaseMap { phase, mask })
}

/// Triangulates every valid pixel; pixels with singular geometry are dropped and counted.
pub fn reconstruct(abs: &AbsolutePhaseMap, calib: &CalibrationData, pitch: f64) -> Result<PointCloud> {
    abs.phase.ensure_dims(calib.camera_resolution)?;
    let (w, h) = calib.camera_resolution;
    let cam = calib.camera_matrix();
    let proj = calib.projector_matrix();
    let rows: Vec<(Vec<CloudPoint>, usize)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut pts = Vec::new();
            let mut dropped = 0;
            for x in 0..w {
                if !*abs.mask.get(x, y) {
                    continue;
                }
                let up = phase_to_column(pitch, *abs.phase.get(x, y));
                match triangulate(cam, proj, (pixel_center(x), pixel_center(y)), up) {
                    Ok(p) => pts.push(CloudPoint {
                        pixel: (x as u32, y as u32),
                        position: p,
                    }),
                    Err(_) => dropped += 1,
                }
            }
            (pts, dropped)
        })
        .collect();
    let mut cloud = PointCloud::empty(w, h);
    for (pts, dropped) in rows {
        cloud.points.extend(pts);
        cloud.dropped += dropped;
    }
    Ok(cloud)
}

/// Wrapped phase → fringe order → absolute phase → point cloud.
pub fn unwrap_and_reconstruct(
    wrapped: &WrappedPhaseMap,
    min_phase: &MinPhaseMap,
    calib: &CalibrationData,
    pitch: f64,
) -> Result<(FringeOrderMap, AbsolutePhaseMap, PointCloud)> {
    let orders = fringe_order(min_phase, wrapped)?;
    let abs = unwrap(wrapped, &orders)?;
    let cloud = reconstruct(&abs, calib, pitch)?;
    Ok((orders, abs, cloud))
}
