//! Task functions: manipulability and joint-limit measures, the contact-force
//! task, the gripper Jacobian and the kineto-static mapping.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x2, Vector3};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::KinematicChain;

/// Index range of joints entering the manipulability sum, `2..=n-1` in
/// one-based numbering.
fn manipulability_range(n: usize) -> std::ops::Range<usize> {
    1..n.saturating_sub(1).max(1)
}

/// `0.5 * sum_{j=2}^{n-1} sin^2(q_j)`
pub fn manipulability_value(q: &DVector<f64>) -> f64 {
    let n = q.len();
    0.5 * manipulability_range(n).map(|j| q[j].sin().powi(2)).sum::<f64>()
}

/// Gradient of [`manipulability_value`]; entries outside the summation range
/// are zero.
pub fn manipulability_jacobian(q: &DVector<f64>) -> DMatrix<f64> {
    let n = q.len();
    let mut j = DMatrix::zeros(1, n);
    for k in manipulability_range(n) {
        j[(0, k)] = q[k].cos() * q[k].sin();
    }
    j
}

/// `1/(2n) * sum ((q_j - mid_j) / (hi_j - lo_j))^2`
pub fn joint_limit_value(q: &DVector<f64>, chain: &KinematicChain) -> Result<f64> {
    check_dim(chain.dof(), q.len())?;
    let n = q.len() as f64;
    let mid = chain.midpoints();
    let sum: f64 = (0..q.len())
        .map(|j| {
            let range = chain.upper()[j] - chain.lower()[j];
            ((q[j] - mid[j]) / range).powi(2)
        })
        .sum();
    Ok(sum / (2.0 * n))
}

/// Gradient of [`joint_limit_value`]: `(q_j - mid_j) / (n (hi_j - lo_j)^2)`.
pub fn joint_limit_jacobian(q: &DVector<f64>, chain: &KinematicChain) -> Result<DMatrix<f64>> {
    check_dim(chain.dof(), q.len())?;
    let n = q.len();
    let mid = chain.midpoints();
    let mut j = DMatrix::zeros(1, n);
    for k in 0..n {
        let range = chain.upper()[k] - chain.lower()[k];
        j[(0, k)] = (q[k] - mid[k]) / (n as f64 * range * range);
    }
    Ok(j)
}

/// Rejects matrices that are not proper rotations.
pub fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if !ortho.is_finite() || ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
        return Err(Error::NotOrthonormal);
    }
    Ok(())
}

/// Force task error in the base frame: `f_desired - R f_contact`.
pub fn force_task_error(
    f_contact_sensor: &Vector3<f64>,
    f_desired: &Vector3<f64>,
    sensor_to_base: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    check_rotation(sensor_to_base)?;
    Ok(f_desired - sensor_to_base * f_contact_sensor)
}

/// Jacobian of the measured grip force with respect to the two jaw speeds.
///
/// Jaw 1 moves its pad along `+y` of the gripper and jaw 2 along `-y`; both
/// change the squeeze seen along the left pad's normal axis, so both columns
/// are the gripper `y` axis expressed in the base frame.
pub fn gripper_jacobian(gripper_to_base: &Matrix3<f64>) -> Matrix3x2<f64> {
    let y = gripper_to_base.column(1).into_owned();
    Matrix3x2::from_columns(&[y, y])
}

/// `J^T f`: joint-space image of an end-effector generalized force.
pub fn kineto_static_dual(j: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(j.nrows(), f.len())?;
    Ok(j.transpose() * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn manipulability_examples() {
        assert_eq!(manipulability_value(&DVector::zeros(7)), 0.0);
        let mut q = DVector::zeros(7);
        for j in 1..6 {
            q[j] = FRAC_PI_2;
        }
        assert!((manipulability_value(&q) - 2.5).abs() < 1e-15);
        // first and last joints never contribute
        q[0] = 1.0;
        q[6] = 1.0;
        let jac = manipulability_jacobian(&q);
        assert_eq!(jac[(0, 0)], 0.0);
        assert_eq!(jac[(0, 6)], 0.0);
    }

    #[test]
    fn joint_limit_examples() {
        let chain = KinematicChain::default();
        assert_eq!(joint_limit_value(&chain.midpoints(), &chain).unwrap(), 0.0);
        let v = joint_limit_value(chain.upper(), &chain).unwrap();
        assert!((v - 0.125).abs() < 1e-15);
    }

    #[test]
    fn force_error_examples() {
        let f = Vector3::new(1.0, 0.0, 0.0);
        let e = force_task_error(&f, &f, &Matrix3::identity()).unwrap();
        assert_eq!(e, Vector3::zeros());

        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let e = force_task_error(&f, &Vector3::zeros(), &rz).unwrap();
        assert!((e - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);

        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            force_task_error(&f, &f, &skewed),
            Err(Error::NotOrthonormal)
        ));
    }

    #[test]
    fn kineto_static_examples() {
        let j = DMatrix::<f64>::identity(3, 5);
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let out = kineto_static_dual(&j, &f).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -2.0, 0.5, 0.0, 0.0]);
        assert_eq!(kineto_static_dual(&j, &DVector::zeros(3)).unwrap(), DVector::zeros(5));
        assert!(kineto_static_dual(&j, &DVector::zeros(2)).is_err());
    }
}
