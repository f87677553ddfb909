//! Dense primal active-set solver for
//! `min 0.5 x'Hx + c'x  s.t.  A x = b,  l <= x <= u`
//! with `H` positive definite, started from a feasible point.

use nalgebra::{DMatrix, DVector};

use super::linalg::{null_space_basis, pseudoinverse};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
    /// `l == u`; the variable never moves.
    Pinned,
}

#[derive(Debug, Clone, Copy)]
pub struct QpProblem<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub linear: &'a DVector<f64>,
    /// Equality rows; `b` is implied by the starting point.
    pub a_eq: &'a DMatrix<f64>,
    pub lower: &'a DVector<f64>,
    pub upper: &'a DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// Bound multipliers, `>= 0` for both sides; zero on free variables.
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
    pub active: Vec<BoundState>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

const STEP_EPS: f64 = 1e-13;

fn select(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|i| v[*i]))
}

/// Solves the problem from `x0`, which must satisfy the bounds.
pub fn solve_box_qp(p: &QpProblem, x0: DVector<f64>, tol: f64, max_iter: usize) -> Result<QpResult> {
    let n = x0.len();
    check_dim(n, p.hessian.nrows())?;
    check_dim(n, p.hessian.ncols())?;
    check_dim(n, p.linear.len())?;
    check_dim(n, p.a_eq.ncols())?;
    check_dim(n, p.lower.len())?;
    check_dim(n, p.upper.len())?;
    let b = p.a_eq * &x0;

    let mut x = x0;
    if (0..n).any(|i| !(p.lower[i] <= p.upper[i])) {
        return Err(Error::Qp("lower bound above upper bound".into()));
    }
    let mut state: Vec<BoundState> = (0..n)
        .map(|i| {
            if p.lower[i] == p.upper[i] {
                BoundState::Pinned
            } else {
                BoundState::Free
            }
        })
        .collect();
    for i in 0..n {
        let slack = 1e-12 * (1.0 + x[i].abs());
        if x[i] < p.lower[i] - slack || x[i] > p.upper[i] + slack {
            return Err(Error::Qp(format!("starting point violates bound {i}")));
        }
        if state[i] == BoundState::Pinned {
            x[i] = p.lower[i];
        }
    }

    let mut at_minimizer = false;
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(Error::Qp(format!("no convergence in {max_iter} active-set iterations")));
        }
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|i| state[*i] == BoundState::Free).collect();
        let g = p.hessian * &x + p.linear;

        if !at_minimizer {
            let step = subspace_step(p, &free, &g)?;
            let scale = 1.0 + x.amax();
            if step.amax() > STEP_EPS * scale {
                let mut alpha = 1.0;
                let mut blocking = None;
                for (k, i) in free.iter().enumerate() {
                    let d = step[k];
                    if d < 0.0 && p.lower[*i].is_finite() {
                        let t = (p.lower[*i] - x[*i]) / d;
                        if t < alpha {
                            alpha = t;
                            blocking = Some((*i, BoundState::Lower));
                        }
                    } else if d > 0.0 && p.upper[*i].is_finite() {
                        let t = (p.upper[*i] - x[*i]) / d;
                        if t < alpha {
                            alpha = t;
                            blocking = Some((*i, BoundState::Upper));
                        }
                    }
                }
                let alpha = alpha.max(0.0);
                for (k, i) in free.iter().enumerate() {
                    x[*i] += alpha * step[k];
                }
                match blocking {
                    Some((i, side)) => {
                        x[i] = if side == BoundState::Lower { p.lower[i] } else { p.upper[i] };
                        state[i] = side;
                    }
                    None => at_minimizer = true,
                }
                continue;
            }
        }

        // at the minimizer of the current working set: check multipliers
        let (nu, mu) = multipliers(p, &free, &g);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let m = match state[i] {
                BoundState::Lower => mu[i],
                BoundState::Upper => -mu[i],
                _ => continue,
            };
            if m < -tol && worst.is_none_or(|(_, w)| m < w) {
                worst = Some((i, m));
            }
        }
        match worst {
            Some((i, _)) => {
                state[i] = BoundState::Free;
                at_minimizer = false;
            }
            None => {
                let (lower_mult, upper_mult) = split_multipliers(&state, &mu);
                let kkt = kkt_residual(p, &x, &b, &nu, &lower_mult, &upper_mult);
                return Ok(QpResult {
                    x,
                    eq_multipliers: nu,
                    lower_multipliers: lower_mult,
                    upper_multipliers: upper_mult,
                    active: state,
                    iterations,
                    kkt_residual: kkt,
                });
            }
        }
    }
}

/// Minimizer of the quadratic over the free variables, keeping `A x` fixed.
fn subspace_step(p: &QpProblem, free: &[usize], g: &DVector<f64>) -> Result<DVector<f64>> {
    if free.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let a_f = p.a_eq.select_columns(free);
    let z = null_space_basis(&a_f);
    if z.ncols() == 0 {
        return Ok(DVector::zeros(free.len()));
    }
    let h_ff = p.hessian.select_rows(free).select_columns(free);
    let reduced = z.transpose() * &h_ff * &z;
    let rhs = -(z.transpose() * select(g, free));
    let w = match reduced.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => return Err(Error::Qp("reduced Hessian is not positive definite".into())),
    };
    Ok(z * w)
}

/// Equality multipliers by least squares on the free rows, then the signed
/// bound multipliers `g + A' nu` on every coordinate.
fn multipliers(p: &QpProblem, free: &[usize], g: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let m = p.a_eq.nrows();
    let nu = if m == 0 || free.is_empty() {
        DVector::zeros(m)
    } else {
        let a_f_t = p.a_eq.select_columns(free).transpose();
        -(pseudoinverse(&a_f_t, 0.0) * select(g, free))
    };
    let r = g + p.a_eq.transpose() * &nu;
    (nu, r)
}

fn split_multipliers(state: &[BoundState], r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = state.len();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        match state[i] {
            BoundState::Lower => lo[i] = r[i],
            BoundState::Upper => hi[i] = -r[i],
            BoundState::Pinned => {
                if r[i] >= 0.0 {
                    lo[i] = r[i];
                } else {
                    hi[i] = -r[i];
                }
            }
            BoundState::Free => {}
        }
    }
    (lo, hi)
}

fn kkt_residual(
    p: &QpProblem,
    x: &DVector<f64>,
    b: &DVector<f64>,
    nu: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let stationarity = p.hessian * x + p.linear + p.a_eq.transpose() * nu - lo + hi;
    let mut worst = stationarity.amax();
    if b.len() > 0 {
        worst = worst.max((p.a_eq * x - b).amax());
    }
    for i in 0..x.len() {
        worst = worst
            .max(p.lower[i] - x[i])
            .max(x[i] - p.upper[i])
            .max(-lo[i])
            .max(-hi[i])
            .max((lo[i] * (x[i] - p.lower[i])).abs())
            .max((hi[i] * (p.upper[i] - x[i])).abs());
    }
    worst
}
