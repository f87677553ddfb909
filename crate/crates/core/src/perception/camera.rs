use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::stack::check_rotation;

/// Pinhole intrinsics. Pixel coordinates are kept as floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Focal length, mm.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    /// Pixel density, px/mm.
    pub sx: f64,
    pub sy: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_width() -> f64 {
    640.0
}

fn default_height() -> f64 {
    480.0
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            f: 1.93,
            cx: 320.0,
            cy: 240.0,
            sx: 318.0,
            sy: 318.0,
            width: default_width(),
            height: default_height(),
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.f, self.sx, self.sy, self.width, self.height]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidInput("camera intrinsics must be positive".into()));
        }
        Ok(())
    }

    pub fn in_image(&self, ix: f64, iy: f64) -> bool {
        (0.0..self.width).contains(&ix) && (0.0..self.height).contains(&iy)
    }
}

/// `X = (Ix - cx) pd / (f sx)`, `Y = (Iy - cy) pd / (f sy)`, `Z = pd`.
pub fn depth_to_camera(ix: f64, iy: f64, pd: f64, intr: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(pd > 0.0) {
        return Err(Error::Occluded(pd));
    }
    Ok(Vector3::new(
        (ix - intr.cx) * pd / (intr.f * intr.sx),
        (iy - intr.cy) * pd / (intr.f * intr.sy),
        pd,
    ))
}

/// Inverse of [`depth_to_camera`]: `(Ix, Iy, pd)`.
pub fn camera_to_pixel(p: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<[f64; 3]> {
    if !(p.z > 0.0) {
        return Err(Error::Occluded(p.z));
    }
    Ok([
        p.x * intr.f * intr.sx / p.z + intr.cx,
        p.y * intr.f * intr.sy / p.z + intr.cy,
        p.z,
    ])
}

/// Camera mounting: `P_base = R p_cam + l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` with its optical (`z`) axis through `target`; image
    /// `y` points as close to world `-z` as possible.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let z = target - eye;
        if z.norm() < 1e-9 {
            return Err(Error::InvalidInput("camera eye equals target".into()));
        }
        let z = z.normalize();
        let up = if z.cross(&Vector3::z()).norm() < 1e-6 {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        Self::new(Matrix3::from_columns(&[x, y, z]), eye)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.translation),
            UnitQuaternion::from_rotation_matrix(&self.rotation),
        )
    }
}

pub fn camera_to_base(p_cam: &Vector3<f64>, extr: &CameraExtrinsics) -> Vector3<f64> {
    extr.rotation * p_cam + extr.translation
}

pub fn base_to_camera(p_base: &Vector3<f64>, extr: &CameraExtrinsics) -> Vector3<f64> {
    extr.rotation.inverse() * (p_base - extr.translation)
}

/// `P_o^b = T_e^b T_c^e P_o^c`.
pub fn object_pose_to_base(
    pose_cam: &Pose,
    camera_to_ee: &Isometry3<f64>,
    ee_to_base: &Isometry3<f64>,
) -> Pose {
    pose_cam.transformed(&(ee_to_base * camera_to_ee))
}
