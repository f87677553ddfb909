//! Tactile sensing: taxel interpolation, deformation-to-force mapping,
//! friction-cone slip test and grip modulation.

pub mod calib;
pub mod mapper;
pub mod spline;

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calib::{read_dataset, synth_frame, write_dataset, CalibrationModel, ContactModel};
pub use mapper::{ForceMapper, Normalization, Sample, TrainConfig, TrainReport, HIDDEN, MAPPER_SCHEMA};
pub use spline::{BicubicSpline, NaturalSpline4};

/// Nominal sensor sample rate.
pub const NOMINAL_HZ: u64 = 115_200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorId {
    LeftJaw,
    RightJaw,
}

/// 4x4 taxel displacements in mm; `taxels[row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub timestamp: f64,
    pub taxels: [[f64; 4]; 4],
    pub sensor: SensorId,
}

impl TactileFrame {
    pub fn validate(&self) -> Result<()> {
        if self.taxels.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("taxel values must be finite".into()))
        }
    }
}

/// Deformation in mm; `z` is the indentation along the pad normal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeformationVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl DeformationVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn tangential(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl From<Vector3<f64>> for DeformationVector {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Bicubic surface over the grid plus the derived deformation:
/// `D_z` is the surface mean and `(D_x, D_y)` are three times the mean
/// gradient, i.e. the mean rise across the pad.
pub fn interpolate_taxels(frame: &TactileFrame) -> (BicubicSpline, DeformationVector) {
    let s = BicubicSpline::new(&frame.taxels);
    let (gu, gv) = s.mean_gradient();
    let d = DeformationVector::new(3.0 * gu, 3.0 * gv, s.mean());
    (s, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionConvention {
    /// Slip when `D_z / |D_t| > mu`.
    #[default]
    AsWritten,
    /// Slip when `|D_t| / D_z > mu`.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionParams {
    pub mu: f64,
    /// N
    pub contact_threshold: f64,
    pub convention: FrictionConvention,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self {
            mu: 0.75,
            contact_threshold: 2.0,
            convention: FrictionConvention::AsWritten,
        }
    }
}

impl FrictionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidInput("friction coefficient must be positive".into()));
        }
        if !(self.contact_threshold >= 0.0 && self.contact_threshold.is_finite()) {
            return Err(Error::InvalidInput("contact threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Slip,
}

/// Ratio compared against `mu`; a zero denominator gives `+inf`.
pub fn friction_ratio(d: &DeformationVector, convention: FrictionConvention) -> f64 {
    let t = d.tangential();
    let (num, den) = match convention {
        FrictionConvention::AsWritten => (d.z, t),
        FrictionConvention::Standard => (t, d.z),
    };
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn check_friction_cone(d: &DeformationVector, params: &FrictionParams) -> Result<Verdict> {
    let v = d.as_vector();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("deformation must be finite".into()));
    }
    if v == Vector3::zeros() {
        return Err(Error::InvalidInput("friction test needs a non-zero deformation".into()));
    }
    Ok(if friction_ratio(d, params.convention) > params.mu {
        Verdict::Slip
    } else {
        Verdict::Stable
    })
}

/// Rotates a sensor-frame force into the base frame; only the rotation parts
/// of the transforms act on a free vector.
pub fn force_to_base(f_sensor: &Vector3<f64>, sensor_to_ee: &Isometry3<f64>, ee_to_base: &Isometry3<f64>) -> Vector3<f64> {
    ee_to_base.rotation * (sensor_to_ee.rotation * f_sensor)
}

/// Proportional grip law `gain (f_target - |f|)` clamped to `+-limit`.
/// Positive values close the jaws.
pub fn modulate_grip(f_measured: &Vector3<f64>, f_target: f64, gain: f64, limit: f64) -> Result<f64> {
    if !(gain > 0.0) || !(limit >= 0.0) {
        return Err(Error::InvalidInput("grip gain must be positive and the limit non-negative".into()));
    }
    Ok((gain * (f_target - f_measured.norm())).clamp(-limit, limit))
}

/// Maps control ticks onto the nominal sensor sample counter. Frames are
/// produced once per control tick; the sensor samples in between are
/// dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TactileClock {
    pub nominal_hz: u64,
    pub control_hz: u64,
}

impl Default for TactileClock {
    fn default() -> Self {
        Self {
            nominal_hz: NOMINAL_HZ,
            control_hz: 1000,
        }
    }
}

impl TactileClock {
    /// Index of the last sensor sample at or before control tick `tick`.
    pub fn sample_index(&self, tick: u64) -> u64 {
        ((tick as u128 * self.nominal_hz as u128) / self.control_hz as u128) as u64
    }

    /// Sensor samples elapsed between ticks `tick - 1` and `tick`.
    pub fn samples_in_tick(&self, tick: u64) -> u64 {
        if tick == 0 {
            return 0;
        }
        self.sample_index(tick) - self.sample_index(tick - 1)
    }

    pub fn sample_time(&self, index: u64) -> f64 {
        index as f64 / self.nominal_hz as f64
    }
}
