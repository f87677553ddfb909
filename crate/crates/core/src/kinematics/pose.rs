use nalgebra::{Isometry3, Matrix2x3, Matrix3, Quaternion, SVector, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Tolerance on |q| - 1 when accepting a raw quaternion.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// End-effector (or object) pose in a reference frame.
///
/// The orientation is stored with a non-negative scalar part so two poses
/// describing the same rotation compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonicalize(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// Builds a pose from a raw `[w, x, y, z]` quaternion, rejecting
    /// quaternions that are not unit length.
    pub fn from_parts(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(norm));
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite position".into()));
        }
        Ok(Self::new(
            Vector3::from(position),
            UnitQuaternion::new_normalize(q),
        ))
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn orientation(&self) -> &UnitQuaternion<f64> {
        &self.orientation
    }

    /// Scalar part of the orientation quaternion.
    pub fn scalar(&self) -> f64 {
        self.orientation.w
    }

    /// Vector part of the orientation quaternion.
    pub fn vector(&self) -> Vector3<f64> {
        self.orientation.imag()
    }

    /// `[x, y, z, qw, qx, qy, qz]`
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    /// Applies `transform` on the left: the pose expressed in the parent frame.
    pub fn transformed(&self, transform: &Isometry3<f64>) -> Self {
        Self::from_isometry(&(transform * self.to_isometry()))
    }
}

/// Flips the quaternion into the hemisphere with non-negative scalar part.
/// At `w == 0` the first non-zero vector component is made positive.
pub fn canonicalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.quaternion();
    let flip = if raw.w != 0.0 {
        raw.w < 0.0
    } else {
        [raw.i, raw.j, raw.k]
            .into_iter()
            .find(|c| *c != 0.0)
            .is_some_and(|c| c < 0.0)
    };
    if flip {
        UnitQuaternion::new_unchecked(-*raw)
    } else {
        q
    }
}

/// `S(v)` with `S(v) w = v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Row selector that keeps the x and y components of the orientation error.
pub fn gamma() -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Five-dimensional Cartesian task error: position error stacked over the
/// first two components of the quaternion orientation error.
///
/// The current orientation is taken in the hemisphere of the desired one,
/// so the result depends only on the two rotations.
pub fn cartesian_task_error(current: &Pose, desired: &Pose) -> SVector<f64, 5> {
    let ep = desired.position - current.position;

    let psi_d = desired.scalar();
    let zeta_d = desired.vector();
    let mut psi = current.scalar();
    let mut zeta = current.vector();
    if psi_d * psi + zeta_d.dot(&zeta) < 0.0 {
        psi = -psi;
        zeta = -zeta;
    }
    let eo = psi * zeta_d - psi_d * zeta - skew(&zeta_d) * zeta;
    let eo = gamma() * eo;
    SVector::<f64, 5>::new(ep.x, ep.y, ep.z, eo.x, eo.y)
}
