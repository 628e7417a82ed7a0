//! Sinusoidal fringe patterns and their analytic absolute phase.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{pixel_center, ImageF32};

/// Nominal three-step phase shift.
pub const NOMINAL_SHIFT: f64 = 2.0 * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSpec {
    /// Fringe period in projector pixels.
    pub pitch: f64,
    pub shift: f64,
    pub mean: f64,
    pub modulation: f64,
    pub steps: usize,
}

impl Default for FringeSpec {
    fn default() -> Self {
        FringeSpec {
            pitch: 18.0,
            shift: NOMINAL_SHIFT,
            mean: 0.5,
            modulation: 0.45,
            steps: 3,
        }
    }
}

impl FringeSpec {
    pub fn new(pitch: f64, mean: f64, modulation: f64) -> Result<Self> {
        let spec = FringeSpec {
            pitch,
            mean,
            modulation,
            ..Default::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::invalid("pitch", "must be > 0"));
        }
        if !self.shift.is_finite() {
            return Err(Error::invalid("shift", "must be finite"));
        }
        if !(self.modulation >= 0.0) || self.mean - self.modulation < 0.0 {
            return Err(Error::invalid("modulation", "mean - modulation must be >= 0"));
        }
        if self.mean + self.modulation > 1.0 {
            return Err(Error::invalid("mean", "mean + modulation must be <= 1"));
        }
        if self.steps != 3 {
            return Err(Error::invalid("steps", "only three-step patterns are supported"));
        }
        Ok(())
    }

    /// Intensity of step `step ∈ {1, 2, 3}` at continuous projector column `u_p`.
    pub fn intensity(&self, u_p: f64, step: usize) -> f64 {
        pattern_intensity(self, u_p, step)
    }
}

/// `I' + I'' cos(2π u_p / λ + (step − 2) δ)`.
pub fn pattern_intensity(spec: &FringeSpec, u_p: f64, step: usize) -> f64 {
    debug_assert!((1..=3).contains(&step));
    let offset = (step as f64 - 2.0) * spec.shift;
    spec.mean + spec.modulation * (absolute_phase(spec.pitch, u_p) + offset).cos()
}

/// `2π u_p / λ`.
#[inline]
pub fn absolute_phase(pitch: f64, u_p: f64) -> f64 {
    TAU * u_p / pitch
}

/// Projector column encoded by an absolute phase.
#[inline]
pub fn phase_to_column(pitch: f64, phase: f64) -> f64 {
    phase * pitch / TAU
}

/// Rasterizes step `step` at `resolution = (width, height)`, sampling pixel centres.
pub fn rasterize_pattern(spec: &FringeSpec, resolution: (usize, usize), step: usize) -> ImageF32 {
    let (w, h) = resolution;
    let row: Vec<f32> = (0..w)
        .map(|u| pattern_intensity(spec, pixel_center(u), step) as f32)
        .collect();
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..h {
        data.extend_from_slice(&row);
    }
    ImageF32::from_vec(w, h, data).expect("dimensions match by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec() -> FringeSpec {
        FringeSpec {
            pitch: 18.0,
            mean: 0.5,
            modulation: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn pattern_examples() {
        let s = spec();
        assert_relative_eq!(pattern_intensity(&s, 0.0, 2), 1.0, epsilon = 1e-15);
        assert_relative_eq!(pattern_intensity(&s, 0.0, 1), 0.25, epsilon = 1e-15);
        assert_relative_eq!(pattern_intensity(&s, 9.0, 2), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn absolute_phase_examples() {
        assert_relative_eq!(absolute_phase(18.0, 18.0), TAU, epsilon = 1e-15);
        assert_relative_eq!(absolute_phase(18.0, 4.5), PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(absolute_phase(18.0, 30.0), 10.471975511965978, epsilon = 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(FringeSpec::new(18.0, 0.5, 0.45).is_ok());
        assert!(FringeSpec::new(0.0, 0.5, 0.45).is_err());
        assert!(FringeSpec::new(18.0, 0.3, 0.45).is_err());
        assert!(FringeSpec::new(18.0, 0.7, 0.45).is_err());
        let four = FringeSpec { steps: 4, ..spec() };
        assert!(four.validate().is_err());
    }

    #[test]
    fn raster_rows_identical_and_centered() {
        let s = spec();
        let img = rasterize_pattern(&s, (40, 7), 1);
        assert_eq!(img.row(0), img.row(6));
        let expected = pattern_intensity(&s, 0.5, 1) as f32;
        assert_eq!(*img.get(0, 3), expected);
    }

    #[test]
    fn raster_period_integral() {
        // Midpoint-rule quadrature over one period of a rasterized row.
        let s = spec();
        let img = rasterize_pattern(&s, (18, 1), 3);
        let integral: f64 = img.row(0).iter().map(|&v| v as f64).sum();
        assert!((integral - 18.0 * s.mean).abs() < 1e-3, "{integral}");
    }

    proptest! {
        #[test]
        fn three_step_sum(u in -500.0f64..500.0, pitch in 4.0f64..64.0) {
            let s = FringeSpec { pitch, ..spec() };
            let sum: f64 = (1..=3).map(|k| pattern_intensity(&s, u, k)).sum();
            prop_assert!((sum - 3.0 * s.mean).abs() < 1e-12);
        }

        #[test]
        fn monotone_phase(u in -1e3f64..1e3, du in 1e-6f64..10.0) {
            prop_assert!(absolute_phase(18.0, u + du) > absolute_phase(18.0, u));
        }
    }
}
