//! A reference desk rig: a camera and a side-mounted projector scanning a sphere
//! while translating sideways.

use nalgebra::Vector3;

use crate::geometry::{CalibrationData, Extrinsics, Intrinsics};
use crate::motion::PipelineConfig;
use crate::patterns::FringeSpec;
use crate::simulator::{Scene, SceneObject, Shape};

#[derive(Debug, Clone)]
pub struct DeskRig {
    pub calibration: CalibrationData,
    pub spec: FringeSpec,
    pub scene: Scene,
    pub sphere_center: Vector3<f64>,
    pub sphere_radius: f64,
    /// Rig travel direction in the camera frame.
    pub direction: Vector3<f64>,
    /// Nearest depth of interest (mm).
    pub z_min: f64,
    /// Travel speed (mm/s) and fringe frame rate (Hz).
    pub speed: f64,
    pub frame_rate: f64,
}

impl DeskRig {
    pub const CAMERA_RESOLUTION: (usize, usize) = (640, 400);
    pub const PROJECTOR_RESOLUTION: (usize, usize) = (456, 570);

    /// 640×400 camera at the origin, 456×570 projector 80 mm to its right converging
    /// at 500 mm, an 18 px fringe pitch and a 50 mm sphere at 500 mm.
    pub fn standard() -> Self {
        let camera = Intrinsics::new(800.0, 800.0, 320.0, 200.0).expect("valid intrinsics");
        let projector = Intrinsics::new(800.0, 800.0, 228.0, 285.0).expect("valid intrinsics");
        let pose =
            Extrinsics::look_at(Vector3::new(80.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 500.0)).expect("valid pose");
        let calibration = CalibrationData::new(
            camera,
            Self::CAMERA_RESOLUTION,
            projector,
            pose,
            Self::PROJECTOR_RESOLUTION,
        )
        .expect("valid calibration");
        let sphere_center = Vector3::new(0.0, 0.0, 500.0);
        let sphere_radius = 50.0;
        let scene = Scene::new(
            vec![SceneObject {
                shape: Shape::Sphere {
                    center: sphere_center,
                    radius: sphere_radius,
                },
                albedo: 0.9,
            }],
            0.05,
        )
        .expect("valid scene");
        DeskRig {
            calibration,
            spec: FringeSpec {
                pitch: 18.0,
                ..FringeSpec::default()
            },
            scene,
            sphere_center,
            sphere_radius,
            direction: Vector3::x(),
            z_min: 440.0,
            speed: 80.0,
            frame_rate: 120.0,
        }
    }

    /// Pipeline settings matching this rig.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            z_min_mm: self.z_min,
            lambda_px: self.spec.pitch,
            direction: self.direction.into(),
            ..PipelineConfig::default()
        }
    }
}
