//! Synthetic contact model, taxel frames and calibration data.

use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::mapper::Sample;
use super::{SensorId, TactileFrame};
use crate::error::{Error, Result};

/// Linear pad contact: each pad is pressed by half the interference between
/// the object and the jaw opening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactModel {
    /// N/m
    pub stiffness: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self { stiffness: 1500.0 }
    }
}

impl ContactModel {
    /// Pad indentation in m for an object of `width` between jaws at
    /// half-openings `g1`, `g2`.
    pub fn indentation(&self, width: f64, g1: f64, g2: f64) -> f64 {
        ((width - (g1 + g2)) / 2.0).max(0.0)
    }

    pub fn normal_force(&self, width: f64, g1: f64, g2: f64) -> f64 {
        self.stiffness * self.indentation(width, g1, g2)
    }

    /// Stiffness in N/mm, the unit used by taxel displacements.
    pub fn k_mm(&self) -> f64 {
        self.stiffness / 1000.0
    }
}

/// Taxel field for a pad carrying `normal` N and in-plane load `shear` N:
/// a uniform indentation plus a linear ramp whose mean gradient encodes the
/// shear, so that `D = f / k_mm` on all three axes.
pub fn synth_frame(model: &ContactModel, normal: f64, shear: [f64; 2], timestamp: f64, sensor: SensorId) -> TactileFrame {
    let k = model.k_mm();
    let depth = normal / k;
    let c = 1.0 / (3.0 * k);
    let mut taxels = [[0.0; 4]; 4];
    for (i, row) in taxels.iter_mut().enumerate() {
        for (j, z) in row.iter_mut().enumerate() {
            *z = depth + c * (shear[0] * (j as f64 - 1.5) + shear[1] * (i as f64 - 1.5));
        }
    }
    TactileFrame {
        timestamp,
        taxels,
        sensor,
    }
}

/// Ground truth `f = K D` with Gaussian noise of `noise` times the
/// full-scale normal force.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    /// N/mm
    pub stiffness: Matrix3<f64>,
    pub noise: f64,
    /// mm
    pub depth_max: f64,
    /// mm
    pub shear_max: f64,
    /// Sample `D_z` symmetrically about zero instead of from `[0, depth_max]`.
    pub centered: bool,
}

impl Default for CalibrationModel {
    fn default() -> Self {
        Self {
            stiffness: Matrix3::identity() * ContactModel::default().k_mm(),
            noise: 0.01,
            depth_max: 6.0,
            shear_max: 2.0,
            centered: false,
        }
    }
}

impl CalibrationModel {
    pub fn force(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.stiffness * d
    }

    pub fn generate(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<Sample>> {
        if !(self.depth_max > 0.0) || !(self.shear_max >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::InvalidInput("calibration ranges must be positive".into()));
        }
        let full_scale = (self.stiffness * Vector3::new(0.0, 0.0, self.depth_max)).norm();
        let noise = Normal::new(0.0, self.noise * full_scale).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let lo = if self.centered { -self.depth_max } else { 0.0 };
        Ok((0..n)
            .map(|_| {
                let shear = if self.shear_max > 0.0 {
                    [
                        rng.random_range(-self.shear_max..=self.shear_max),
                        rng.random_range(-self.shear_max..=self.shear_max),
                    ]
                } else {
                    [0.0, 0.0]
                };
                let d = Vector3::new(shear[0], shear[1], rng.random_range(lo..=self.depth_max));
                let f = self.force(&d) + Vector3::from_fn(|_, _| noise.sample(rng));
                Sample {
                    deformation: d,
                    force: f,
                }
            })
            .collect())
    }
}

/// Rows `Dx Dy Dz fx fy fz` (mm, N).
pub fn write_dataset<W: Write>(samples: &[Sample], mut out: W) -> Result<()> {
    writeln!(out, "# Dx Dy Dz fx fy fz")?;
    for s in samples {
        let d = s.deformation;
        let f = s.force;
        writeln!(out, "{} {} {} {} {} {}", d.x, d.y, d.z, f.x, f.y, f.z)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))?;
        if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("line {}: expected six finite values", n + 1)));
        }
        out.push(Sample {
            deformation: Vector3::new(v[0], v[1], v[2]),
            force: Vector3::new(v[3], v[4], v[5]),
        });
    }
    Ok(out)
}
