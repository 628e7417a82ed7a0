//! Ray-casting simulator of a camera/projector rig carried by a linear stage.
//!
//! The rig travels along `direction`; equivalently the scene is translated by
//! `-displacement * direction` in the (moving) camera frame, which keeps the
//! world frame equal to the camera frame.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{CalibrationData, WorldPoint};
use crate::image::{pixel_center, Image, ImageF32, ImageF64, Mask};
use crate::motion::FrameTriple;
use crate::patterns::{absolute_phase, pattern_intensity, FringeSpec};

const HIT_EPS: f64 = 1e-9;
const SHADOW_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Points with `normal · p = offset`.
    Plane {
        normal: Vector3<f64>,
        offset: f64,
    },
    Mesh(TriangleMesh),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    bbox_min: Vector3<f64>,
    bbox_max: Vector3<f64>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::invalid("mesh", "needs vertices and faces"));
        }
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::invalid(
                "mesh.faces",
                format!("index {bad} out of range for {} vertices", vertices.len()),
            ));
        }
        let mut bbox_min = vertices[0];
        let mut bbox_max = vertices[0];
        for v in &vertices {
            bbox_min = bbox_min.inf(v);
            bbox_max = bbox_max.sup(v);
        }
        Ok(TriangleMesh {
            vertices,
            faces,
            bbox_min,
            bbox_max,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    fn translated(&self, offset: &Vector3<f64>) -> Self {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
            bbox_min: self.bbox_min + offset,
            bbox_max: self.bbox_max + offset,
        }
    }

    fn hits_bbox(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> bool {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() < 1e-300 {
                if origin[k] < self.bbox_min[k] || origin[k] > self.bbox_max[k] {
                    return false;
                }
                continue;
            }
            let a = (self.bbox_min[k] - origin[k]) / dir[k];
            let b = (self.bbox_max[k] - origin[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        t1 >= t0.max(0.0)
    }

    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<f64> {
        if !self.hits_bbox(origin, dir) {
            return None;
        }
        let mut best: Option<f64> = None;
        for f in &self.faces {
            let t = intersect_triangle(
                origin,
                dir,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            );
            if let Some(t) = t.filter(|&t| t > t_min) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }
}

/// Möller–Trumbore, returning the ray parameter of the hit.
fn intersect_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Both real roots of `|o + t d − c|² = r²`, ascending.
pub fn sphere_roots(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    radius: f64,
) -> Option<(f64, f64)> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let half_b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -(half_b + half_b.signum() * disc.sqrt());
    if q == 0.0 {
        // Origin on the surface with a tangent ray.
        return Some((0.0, 0.0));
    }
    let (t1, t2) = (q / a, c / q);
    Some((t1.min(t2), t1.max(t2)))
}

impl Shape {
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => {
                let (t0, t1) = sphere_roots(origin, dir, center, *radius)?;
                if t0 > t_min {
                    Some(t0)
                } else if t1 > t_min {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-14 {
                    return None;
                }
                let t = (offset - normal.dot(origin)) / denom;
                (t > t_min).then_some(t)
            }
            Shape::Mesh(mesh) => mesh.intersect(origin, dir, t_min),
        }
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Shape {
        match self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + offset,
                radius: *radius,
            },
            Shape::Plane { normal, offset: d } => Shape::Plane {
                normal: *normal,
                offset: d + normal.dot(offset),
            },
            Shape::Mesh(mesh) => Shape::Mesh(mesh.translated(offset)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub albedo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    objects: Vec<SceneObject>,
    ambient: f64,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, ambient: f64) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::invalid("objects", "scene must contain at least one object"));
        }
        if !(0.0..=1.0).contains(&ambient) {
            return Err(Error::invalid("ambient", "must lie in [0, 1]"));
        }
        for (i, o) in objects.iter().enumerate() {
            if !(0.0..=1.0).contains(&o.albedo) || o.albedo + ambient > 1.0 {
                return Err(Error::invalid(
                    format!("objects[{i}].albedo"),
                    "albedo must lie in [0, 1] with albedo + ambient <= 1",
                ));
            }
            match &o.shape {
                Shape::Sphere { radius, .. } if !(*radius > 0.0) => {
                    return Err(Error::invalid(format!("objects[{i}].radius"), "must be > 0"));
                }
                Shape::Plane { normal, .. } if (normal.norm() - 1.0).abs() > 1e-9 => {
                    return Err(Error::invalid(format!("objects[{i}].normal"), "must be unit"));
                }
                _ => {}
            }
        }
        Ok(Scene { objects, ambient })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Scene {
        Scene {
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    shape: o.shape.translated(offset),
                    albedo: o.albedo,
                })
                .collect(),
            ambient: self.ambient,
        }
    }

    /// Nearest hit `(t, object index)` with `t > t_min`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(t) = o.shape.intersect(origin, dir, t_min) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    /// True when the segment from `p` to `light` is blocked by any surface.
    pub fn occluded(&self, p: &WorldPoint, light: &Vector3<f64>) -> bool {
        let dir = light - p;
        self.objects.iter().any(|o| {
            o.shape
                .intersect(p, &dir, SHADOW_EPS)
                .is_some_and(|t| t < 1.0 - SHADOW_EPS)
        })
    }

    /// Parses the scene JSON document:
    /// `{"ambient": a, "albedo": default, "objects": [{"type": "sphere" | "plane" | "mesh", ...}]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse("scene", e.to_string()))?;
        let ambient = match doc.get("ambient") {
            None => 0.0,
            Some(v) => v.as_f64().ok_or_else(|| Error::parse("ambient", "expected a number"))?,
        };
        let default_albedo = match doc.get("albedo") {
            None => 1.0 - ambient,
            Some(v) => v.as_f64().ok_or_else(|| Error::parse("albedo", "expected a number"))?,
        };
        let objs = doc
            .get("objects")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("objects", "missing array"))?;
        let mut objects = Vec::with_capacity(objs.len());
        for (i, o) in objs.iter().enumerate() {
            let path = format!("objects[{i}]");
            let albedo = match o.get("albedo") {
                None => default_albedo,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::parse(format!("{path}.albedo"), "expected a number"))?,
            };
            let kind = o
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(format!("{path}.type"), "missing string"))?;
            let shape = match kind {
                "sphere" => Shape::Sphere {
                    center: vec3(o, &path, "center")?,
                    radius: num(o, &path, "radius")?,
                },
                "plane" => {
                    let n = vec3(o, &path, "normal")?;
                    let norm = n.norm();
                    if !(norm > 0.0) {
                        return Err(Error::parse(format!("{path}.normal"), "must be nonzero"));
                    }
                    Shape::Plane {
                        normal: n / norm,
                        offset: num(o, &path, "offset")? / norm,
                    }
                }
                "mesh" => {
                    let verts = o
                        .get("vertices")
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::parse(format!("{path}.vertices"), "missing array"))?;
                    let vertices = verts
                        .iter()
                        .enumerate()
                        .map(|(j, v)| vec3_value(v, &format!("{path}.vertices[{j}]")))
                        .collect::<Result<Vec<_>>>()?;
                    let fs = o
                        .get("faces")
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::parse(format!("{path}.faces"), "missing array"))?;
                    let faces = fs
                        .iter()
                        .enumerate()
                        .map(|(j, f)| {
                            let fp = format!("{path}.faces[{j}]");
                            let a = f
                                .as_array()
                                .filter(|a| a.len() == 3)
                                .ok_or_else(|| Error::parse(fp.clone(), "expected 3 indices"))?;
                            let mut idx = [0usize; 3];
                            for (k, x) in a.iter().enumerate() {
                                idx[k] = x
                                    .as_u64()
                                    .ok_or_else(|| Error::parse(fp.clone(), "expected integer indices"))?
                                    as usize;
                            }
                            Ok(idx)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Shape::Mesh(TriangleMesh::new(vertices, faces)?)
                }
                other => {
                    return Err(Error::parse(
                        format!("{path}.type"),
                        format!("unknown object type `{other}`"),
                    ))
                }
            };
            objects.push(SceneObject { shape, albedo });
        }
        Scene::new(objects, ambient)
    }
}

fn num(o: &Value, path: &str, name: &str) -> Result<f64> {
    o.get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::parse(format!("{path}.{name}"), "expected a number"))
}

fn vec3(o: &Value, path: &str, name: &str) -> Result<Vector3<f64>> {
    let v = o
        .get(name)
        .ok_or_else(|| Error::parse(format!("{path}.{name}"), "missing field"))?;
    vec3_value(v, &format!("{path}.{name}"))
}

fn vec3_value(v: &Value, path: &str) -> Result<Vector3<f64>> {
    let a = v
        .as_array()
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::parse(path, "expected [x, y, z]"))?;
    let mut out = Vector3::zeros();
    for (k, x) in a.iter().enumerate() {
        out[k] = x
            .as_f64()
            .ok_or_else(|| Error::parse(format!("{path}[{k}]"), "expected a number"))?;
    }
    Ok(out)
}

/// Stage travel samples `(time s, displacement mm)` along a unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, f64)>,
    direction: Vector3<f64>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, f64)>, direction: Vector3<f64>) -> Result<Self> {
        if samples.len() < 2 || !(samples[samples.len() - 1].0 > samples[0].0) {
            return Err(Error::EmptyTrajectory);
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("trajectory", "time must be strictly increasing"));
        }
        if samples.iter().any(|(t, d)| !t.is_finite() || !d.is_finite()) {
            return Err(Error::invalid("trajectory", "non-finite sample"));
        }
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("direction", "must be a unit vector"));
        }
        Ok(Trajectory { samples, direction })
    }

    /// Constant velocity starting from rest position 0.
    pub fn uniform(speed: f64, duration: f64, sample_rate: f64, direction: Vector3<f64>) -> Result<Self> {
        Self::from_profile(duration, sample_rate, direction, |t| speed * t)
    }

    /// Accelerate uniformly to `v_max` over `ramp`, cruise for `cruise`, then decelerate
    /// to rest over `ramp`.
    pub fn trapezoid(v_max: f64, ramp: f64, cruise: f64, sample_rate: f64, direction: Vector3<f64>) -> Result<Self> {
        let total = 2.0 * ramp + cruise;
        Self::from_profile(total, sample_rate, direction, |t| {
            trapezoid_displacement(v_max, ramp, cruise, t)
        })
    }

    fn from_profile(duration: f64, sample_rate: f64, direction: Vector3<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(duration > 0.0) || !(sample_rate > 0.0) {
            return Err(Error::EmptyTrajectory);
        }
        let n = (duration * sample_rate).ceil() as usize;
        let samples = (0..=n)
            .map(|k| {
                let t = (k as f64 / sample_rate).min(duration);
                (t, f(t))
            })
            .collect::<Vec<_>>();
        let mut samples = samples;
        samples.dedup_by(|b, a| b.0 <= a.0);
        Self::new(samples, direction)
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Piecewise-linear displacement at `t`.
    pub fn displacement_at(&self, t: f64) -> Result<f64> {
        let (start, end) = self.domain();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfTrajectory { time: t, start, end });
        }
        let idx = self.samples.partition_point(|s| s.0 <= t);
        if idx >= self.samples.len() {
            return Ok(self.samples[self.samples.len() - 1].1);
        }
        let (t0, d0) = self.samples[idx - 1];
        let (t1, d1) = self.samples[idx];
        let w = (t - t0) / (t1 - t0);
        Ok(d0 + w * (d1 - d0))
    }

    /// Parses `time_s,displacement_mm` CSV (header optional).
    pub fn from_csv(text: &str, direction: Vector3<f64>) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic()) {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                parts
                    .next()
                    .map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::parse(format!("trajectory line {}", lineno + 1), format!("bad {name}")))
            };
            let t = next("time_s")?;
            let d = next("displacement_mm")?;
            samples.push((t, d));
        }
        Self::new(samples, direction)
    }

    pub fn to_csv(&self) -> String {
        samples_to_csv(&self.samples)
    }
}

/// Closed-form travel of the trapezoidal velocity profile at time `t`.
pub fn trapezoid_displacement(v_max: f64, ramp: f64, cruise: f64, t: f64) -> f64 {
    let a = v_max / ramp;
    let ramp_dist = 0.5 * v_max * ramp;
    if t <= 0.0 {
        0.0
    } else if t <= ramp {
        0.5 * a * t * t
    } else if t <= ramp + cruise {
        ramp_dist + v_max * (t - ramp)
    } else if t <= 2.0 * ramp + cruise {
        let td = t - ramp - cruise;
        ramp_dist + v_max * cruise + v_max * td - 0.5 * a * td * td
    } else {
        2.0 * ramp_dist + v_max * cruise
    }
}

fn samples_to_csv(samples: &[(f64, f64)]) -> String {
    let mut out = String::from("time_s,displacement_mm\n");
    for (t, d) in samples {
        let _ = writeln!(out, "{t},{d}");
    }
    out
}

/// Encoder read-out model: additive Gaussian noise followed by quantization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncoderModel {
    pub quantization: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl EncoderModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    fn read(&self, value: f64, rng: &mut ChaCha8Rng) -> f64 {
        let mut v = value;
        if self.noise_sigma > 0.0 {
            v += Normal::new(0.0, self.noise_sigma).expect("sigma > 0").sample(rng);
        }
        if self.quantization > 0.0 {
            v = (v / self.quantization).round() * self.quantization;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSample {
    pub time: f64,
    pub displacement: f64,
}

/// Samples the trajectory at `rate` Hz from its start, plus its end point, through
/// the encoder model.
pub fn make_encoder_log(trajectory: &Trajectory, rate: f64, model: &EncoderModel) -> Result<Vec<EncoderSample>> {
    if !(rate > 0.0) {
        return Err(Error::invalid("rate", "must be > 0"));
    }
    let (start, end) = trajectory.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut out = Vec::new();
    for k in 0.. {
        let t = start + k as f64 / rate;
        if t > end + 1e-12 {
            break;
        }
        let t = t.min(end);
        let d = trajectory.displacement_at(t)?;
        out.push(EncoderSample {
            time: t,
            displacement: model.read(d, &mut rng),
        });
    }
    // Close the log at the end of travel so it spans the whole trajectory.
    if out.last().is_some_and(|s| s.time < end) {
        out.push(EncoderSample {
            time: end,
            displacement: model.read(trajectory.displacement_at(end)?, &mut rng),
        });
    }
    Ok(out)
}

pub fn encoder_log_to_csv(log: &[EncoderSample]) -> String {
    samples_to_csv(&log.iter().map(|s| (s.time, s.displacement)).collect::<Vec<_>>())
}

/// Per-camera-pixel truth for one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// z of the visible surface point (mm); NaN where no surface is hit.
    pub depth: ImageF64,
    /// Absolute projector phase of the visible point (rad); NaN where unlit.
    pub phase: ImageF64,
    /// Hit, inside the projector frustum and not shadowed.
    pub valid: Mask,
    /// Hit but occluded from the projector.
    pub shadow: Mask,
}

impl GroundTruth {
    pub fn point(&self, calib: &CalibrationData, x: usize, y: usize) -> Option<WorldPoint> {
        let z = *self.depth.get(x, y);
        z.is_finite()
            .then(|| calib.camera_ray(pixel_center(x), pixel_center(y)) * z)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelSample {
    intensity: f32,
    depth: f64,
    phase: f64,
    valid: bool,
    shadow: bool,
}

/// Renders fringe step `step` with the rig displaced by `displacement` along `direction`.
pub fn render_frame(
    scene: &Scene,
    calib: &CalibrationData,
    spec: &FringeSpec,
    step: usize,
    displacement: f64,
    direction: &Vector3<f64>,
) -> (ImageF32, GroundTruth) {
    let moved = scene.translated(&(-displacement * direction));
    render_static(&moved, calib, spec, step)
}

fn render_static(scene: &Scene, calib: &CalibrationData, spec: &FringeSpec, step: usize) -> (ImageF32, GroundTruth) {
    let (w, h) = calib.camera_resolution;
    let (pw, ph) = calib.projector_resolution;
    let proj = calib.projector_matrix();
    let light = calib.projector_center();
    let origin = Vector3::zeros();
    let samples = Image::from_fn_par(w, h, |x, y| {
        let dir = calib.camera_ray(pixel_center(x), pixel_center(y));
        let Some((t, idx)) = scene.cast(&origin, &dir, HIT_EPS) else {
            return PixelSample {
                depth: f64::NAN,
                phase: f64::NAN,
                ..Default::default()
            };
        };
        let p = dir * t;
        let albedo = scene.objects[idx].albedo;
        let mut s = PixelSample {
            intensity: scene.ambient as f32,
            depth: p.z,
            phase: f64::NAN,
            valid: false,
            shadow: false,
        };
        let Ok(pp) = proj.project(&p) else { return s };
        let inside = pp.s > 0.0 && pp.u >= 0.0 && pp.u < pw as f64 && pp.v >= 0.0 && pp.v < ph as f64;
        if !inside {
            return s;
        }
        if scene.occluded(&p, &light) {
            s.shadow = true;
            return s;
        }
        s.intensity = (scene.ambient + albedo * pattern_intensity(spec, pp.u, step)) as f32;
        s.phase = absolute_phase(spec.pitch, pp.u);
        s.valid = true;
        s
    });
    let image = samples.map(|s| s.intensity);
    let truth = GroundTruth {
        depth: samples.map(|s| s.depth),
        phase: samples.map(|s| s.phase),
        valid: samples.map(|s| s.valid),
        shadow: samples.map(|s| s.shadow),
    };
    (image, truth)
}

/// Adds seeded Gaussian noise; each row draws from its own stream so the result
/// does not depend on the worker count.
pub fn add_gaussian_noise(image: &mut ImageF32, sigma: f64, seed: u64, stream: u64) {
    if !(sigma > 0.0) {
        return;
    }
    use rayon::prelude::*;
    let w = image.width();
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    image.as_mut_slice().par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.wrapping_mul(1 << 32).wrapping_add(y as u64));
        for v in row.iter_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    });
}

#[derive(Debug, Clone)]
pub struct RenderedTriple {
    pub frames: FrameTriple,
    pub truth: [GroundTruth; 3],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions {
    pub encoder: EncoderModel,
    /// Additive Gaussian image noise (intensity units).
    pub image_noise_sigma: f64,
    pub seed: u64,
}

/// Renders steps 1, 2, 3 at the trajectory displacements of `times`.
pub fn render_triple(
    scene: &Scene,
    calib: &CalibrationData,
    spec: &FringeSpec,
    trajectory: &Trajectory,
    times: [f64; 3],
    options: &RenderOptions,
) -> Result<RenderedTriple> {
    if !(times[0] < times[1] && times[1] < times[2]) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    let true_d = [
        trajectory.displacement_at(times[0])?,
        trajectory.displacement_at(times[1])?,
        trajectory.displacement_at(times[2])?,
    ];
    let dir = trajectory.direction();
    let mut images = Vec::with_capacity(3);
    let mut truths = Vec::with_capacity(3);
    for (k, d) in true_d.iter().enumerate() {
        let (mut img, gt) = render_frame(scene, calib, spec, k + 1, *d, &dir);
        let stream = (times[k].to_bits() ^ (k as u64)).rotate_left(7);
        add_gaussian_noise(&mut img, options.image_noise_sigma, options.seed, stream);
        images.push(img);
        truths.push(gt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.encoder.seed);
    let readings = true_d.map(|d| options.encoder.read(d, &mut rng));
    let [i1, i2, i3]: [ImageF32; 3] = images.try_into().expect("three frames");
    let frames = FrameTriple::new(i1, i2, i3, times, readings)?;
    let truth: [GroundTruth; 3] = truths.try_into().expect("three frames");
    Ok(RenderedTriple { frames, truth })
}
