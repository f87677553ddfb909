use nalgebra::{DMatrix, DVector};

use super::qp::{solve_box_qp, QpProblem};
use super::{group_levels, level_system, vstack, Solution, SolverConfig, TaskTerm};
use crate::error::{check_dim, Error, Result};

/// Cascaded QP: each level minimizes
/// `0.5 |J x - Omega e|^2 + 0.5 lambda^2 |x - x_prev|^2` over `l <= x <= u`
/// while keeping every higher level's achieved task value. The level slack is
/// the remaining residual `Omega e - J x`.
pub fn solve_cascaded_qp(
    terms: &[TaskTerm],
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    config: &SolverConfig,
) -> Result<Solution> {
    let levels = group_levels(terms)?;
    let n = terms[0].cols();
    check_dim(n, lower.len())?;
    check_dim(n, upper.len())?;
    if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidInput("velocity bounds need l <= u".into()));
    }

    let mut x = DVector::zeros(n).zip_zip_map(lower, upper, |v: f64, l, u| v.clamp(l, u));
    let mut higher = DMatrix::zeros(0, n);
    let mut slack = Vec::with_capacity(levels.len());
    let mut kkt: f64 = 0.0;
    let mut iterations = 0;
    for level in &levels {
        let damping = config.level_damping(level[0].priority);
        let d2 = damping * damping;
        let (j, r) = level_system(level);
        let mut h = j.transpose() * &j;
        for i in 0..n {
            h[(i, i)] += d2;
        }
        let c = -(j.transpose() * &r) - &x * d2;
        let problem = QpProblem {
            hessian: &h,
            linear: &c,
            a_eq: &higher,
            lower,
            upper,
        };
        let out = solve_box_qp(&problem, x, config.qp_tolerance, config.max_active_set_iters)?;
        x = out.x;
        kkt = kkt.max(out.kkt_residual);
        iterations += out.iterations;
        slack.push((&r - &j * &x).norm());
        higher = vstack(&higher, &j);
    }
    if kkt > config.qp_tolerance {
        log::debug!("cascade kkt residual {kkt:.3e} above tolerance");
    }
    // rounding in the subspace steps can leave free variables a few ulps out
    let x = x.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u));
    Ok(Solution::assemble(terms, x, slack, kkt, iterations))
}
