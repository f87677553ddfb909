use nalgebra::{DMatrix, DVector};

use super::linalg::{null_space_projector, pseudoinverse};
use super::{group_levels, level_system, vstack, Projection, Solution, SolverConfig, TaskTerm};
use crate::error::{Error, Result};

/// Row-stacks `alpha_j J_j` and `alpha_j e_j` in the given order.
pub fn augmented_jacobian(terms: &[TaskTerm]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let Some(first) = terms.first() else {
        return Err(Error::InvalidInput("no tasks to augment".into()));
    };
    let n = first.cols();
    let rows: usize = terms.iter().map(|t| t.rows()).sum();
    let mut j = DMatrix::zeros(rows, n);
    let mut e = DVector::zeros(rows);
    let mut at = 0;
    for t in terms {
        crate::error::check_dim(n, t.cols())?;
        crate::error::check_dim(t.rows(), t.jacobian.nrows())?;
        if t.weight < 0.0 {
            return Err(Error::InvalidInput(format!("task {}: negative weight", t.id)));
        }
        let k = t.rows();
        j.rows_mut(at, k).copy_from(&(&t.jacobian * t.weight));
        e.rows_mut(at, k).copy_from(&(&t.error * t.weight));
        at += k;
    }
    Ok((j, e))
}

/// Closed-form prioritized solution.
pub fn solve_prioritized(terms: &[TaskTerm], config: &SolverConfig) -> Result<Solution> {
    config.validate().map_err(Error::InvalidInput)?;
    let levels = group_levels(terms)?;
    let n = terms[0].cols();
    let mut qdot = DVector::zeros(n);
    let mut higher = DMatrix::zeros(0, n);
    let mut slack = Vec::with_capacity(levels.len());

    match config.projection {
        Projection::Successive => {
            for level in &levels {
                let damping = config.level_damping(level[0].priority);
                let (j, r) = level_system(level);
                let residual = &r - &j * &qdot;
                let null = null_space_projector(&higher);
                let projected = &j * &null;
                qdot += null * pseudoinverse(&projected, damping) * residual;
                slack.push((&r - &j * &qdot).norm());
                higher = vstack(&higher, &j);
            }
        }
        Projection::Literal => {
            let ordered: Vec<&TaskTerm> = levels.iter().flatten().copied().collect();
            for t in &ordered {
                let damping = config.level_damping(t.priority);
                let contribution = pseudoinverse(&t.jacobian, damping) * t.reference();
                qdot += null_space_projector(&higher) * contribution;
                higher = vstack(&higher, &(&t.jacobian * t.weight));
            }
            for level in &levels {
                let (j, r) = level_system(level);
                slack.push((r - j * &qdot).norm());
            }
        }
    }
    Ok(Solution::assemble(terms, qdot, slack, 0.0, levels.len()))
}
