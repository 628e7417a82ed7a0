#![allow(dead_code)]

use fringe_core::cloud::PointCloud;
use fringe_core::metrics::SphereFit;
use fringe_core::simulator::{render_triple, RenderOptions, RenderedTriple, Scene, SceneObject, Shape, Trajectory};
use fringe_core::DeskRig;
use nalgebra::Vector3;

/// Frame times of the `j`-th back-to-back triple captured at `rate` Hz from t = 0.
pub fn triple_times(rate: f64, j: usize) -> [f64; 3] {
    let k = 3 * j;
    [k as f64 / rate, (k + 1) as f64 / rate, (k + 2) as f64 / rate]
}

pub fn render(rig: &DeskRig, traj: &Trajectory, j: usize, options: &RenderOptions) -> RenderedTriple {
    render_triple(
        &rig.scene,
        &rig.calibration,
        &rig.spec,
        traj,
        triple_times(rig.frame_rate, j),
        options,
    )
    .expect("render")
}

pub fn stationary(rig: &DeskRig) -> Trajectory {
    Trajectory::new(vec![(0.0, 0.0), (10.0, 0.0)], rig.direction).unwrap()
}

/// The rig's sphere as seen at encoder reading `d`.
pub fn truth_sphere(rig: &DeskRig, d: f64) -> SphereFit {
    SphereFit::new(rig.sphere_center - rig.direction * d, rig.sphere_radius).unwrap()
}

pub fn sphere_errors(cloud: &PointCloud, sphere: &SphereFit) -> Vec<f64> {
    cloud.positions().map(|p| sphere.signed_distance(p)).collect()
}

pub fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// A base plane tilted by `TILT_DEG` about the camera y axis with two spheres
/// resting on it, spanning more depth than one fringe covers.
pub struct TiltedScene {
    pub scene: Scene,
    pub tilt: f64,
    /// Central-ray depth of the plane touching both sphere tops.
    pub top_plane_depth: f64,
}

pub const TILT_DEG: f64 = 10.0;

pub fn tilted_scene() -> TiltedScene {
    let tilt = TILT_DEG.to_radians();
    let normal = Vector3::new(tilt.sin(), 0.0, tilt.cos());
    let along = Vector3::new(tilt.cos(), 0.0, -tilt.sin());
    let base = Vector3::new(0.0, 0.0, 540.0);
    let radius = 25.0;
    let mut objects = vec![SceneObject {
        shape: Shape::Plane {
            normal,
            offset: normal.dot(&base),
        },
        albedo: 0.8,
    }];
    for side in [-1.0, 1.0] {
        objects.push(SceneObject {
            shape: Shape::Sphere {
                center: base + along * (side * 120.0) - normal * radius,
                radius,
            },
            albedo: 0.9,
        });
    }
    TiltedScene {
        scene: Scene::new(objects, 0.05).unwrap(),
        tilt,
        top_plane_depth: 540.0 - 2.0 * radius / tilt.cos(),
    }
}
