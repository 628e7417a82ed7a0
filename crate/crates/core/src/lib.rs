//! Motion-compensated three-step phase-shifting profilometry.
//!
//! A camera–projector rig translating along a known axis captures three
//! phase-shifted fringe images per measurement. Rig motion between the exposures
//! misaligns the frames and perturbs the phase shifts; [`motion::run_pipeline`]
//! removes both effects using the encoder-measured displacement and the pinhole
//! models of both devices. A ray-casting [`simulator`] renders fringe frames and
//! ground truth for a desk-scale rig.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod patterns;
pub mod psp;
pub mod rig;
pub mod simulator;

pub use cloud::{CloudPoint, PointCloud};
pub use error::{Error, Result};
pub use geometry::{CalibrationData, Extrinsics, Intrinsics, ProjectionMatrix, WorldPoint};
pub use image::{Image, ImageF32, ImageF64, Mask};
pub use motion::{run_pipeline, CorrectionMode, FrameTriple, PipelineConfig, PipelineOutput};
pub use patterns::FringeSpec;
pub use rig::DeskRig;
