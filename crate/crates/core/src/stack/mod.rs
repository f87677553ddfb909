//! Stack of tasks: prioritized task couples, closed-form null-space cascades
//! and the cascaded box-constrained QP.

mod cascade;
mod config;
mod linalg;
mod qp;
mod solve;
mod tasks;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{cartesian_rows, cartesian_task_error, KinematicChain, Pose};

pub use cascade::solve_cascaded_qp;
pub use config::{Alphas, Gains, QdotBounds, SolverConfig, SOLVER_SCHEMA};
pub use linalg::{null_space_basis, null_space_projector, pseudoinverse, row_space_basis, RANK_EPS};
pub use qp::{solve_box_qp, BoundState, QpProblem, QpResult};
pub use solve::{augmented_jacobian, solve_prioritized};
pub use tasks::{
    check_rotation, force_task_error, gripper_jacobian, joint_limit_jacobian, joint_limit_value,
    kineto_static_dual, manipulability_jacobian, manipulability_value,
};

/// Number of gripper jaw variables appended after the arm joints.
pub const JAW_COUNT: usize = 2;
/// Jaw travel (half-opening per jaw), meters.
pub const JAW_MAX: f64 = 0.04;
/// Default control period, seconds.
pub const DEFAULT_DT: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Priority {
    Hard(u32),
    Soft,
}

/// Rotation from the left pad sensor frame to the gripper frame. The sensor
/// `z` axis is the inward pad normal (gripper `-y`).
pub fn pad_to_gripper() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// End-effector pose tracking on the five-row Cartesian error.
    Cartesian { target: Pose },
    /// Normal grip force along the pad normal, newtons.
    Force { target: f64 },
    /// Drives the manipulability surrogate toward `desired`.
    Manipulability { desired: f64 },
    /// Drives the joint-limit measure toward zero.
    JointLimit,
    /// Joint-space virtual spring holding `target`: reference `J^T K e`.
    Hold { target: Pose, stiffness: f64 },
    /// Jaw half-openings, meters.
    JawPosition { target: [f64; 2] },
}

impl TaskKind {
    pub fn rows(&self, dof: usize) -> usize {
        match self {
            TaskKind::Cartesian { .. } => 5,
            TaskKind::Force { .. } => 3,
            TaskKind::Manipulability { .. } | TaskKind::JointLimit => 1,
            TaskKind::Hold { .. } => dof,
            TaskKind::JawPosition { .. } => JAW_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    /// Diagonal of the gain matrix; a single entry is broadcast.
    pub gain: Vec<f64>,
    pub weight: f64,
    pub priority: Priority,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, kind: TaskKind, priority: Priority) -> Self {
        Self {
            id: id.into(),
            kind,
            gain: vec![1.0],
            weight: 1.0,
            priority,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = vec![gain];
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    fn validate(&self, dof: usize) -> Result<()> {
        let rows = self.kind.rows(dof);
        if self.gain.len() != 1 && self.gain.len() != rows {
            return Err(Error::InvalidInput(format!(
                "task {}: gain has {} entries for {} rows",
                self.id,
                self.gain.len(),
                rows
            )));
        }
        if self.gain.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidInput(format!("task {}: gains must be positive", self.id)));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidInput(format!("task {}: weight must be >= 0", self.id)));
        }
        Ok(())
    }

    fn gain_vector(&self, rows: usize) -> DVector<f64> {
        if self.gain.len() == 1 {
            DVector::from_element(rows, self.gain[0])
        } else {
            DVector::from_column_slice(&self.gain)
        }
    }
}

/// A task linearized at the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTerm {
    pub id: String,
    pub jacobian: DMatrix<f64>,
    pub error: DVector<f64>,
    /// Diagonal of the gain matrix.
    pub gain: DVector<f64>,
    pub weight: f64,
    pub priority: Priority,
}

impl TaskTerm {
    pub fn new(
        id: impl Into<String>,
        jacobian: DMatrix<f64>,
        error: DVector<f64>,
        priority: Priority,
    ) -> Self {
        let rows = error.len();
        Self {
            id: id.into(),
            jacobian,
            error,
            gain: DVector::from_element(rows, 1.0),
            weight: 1.0,
            priority,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain.fill(gain);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// `Omega e`, the commanded task velocity.
    pub fn reference(&self) -> DVector<f64> {
        self.gain.component_mul(&self.error)
    }

    pub fn rows(&self) -> usize {
        self.error.len()
    }

    pub fn cols(&self) -> usize {
        self.jacobian.ncols()
    }

    fn check(&self) -> Result<()> {
        check_dim(self.error.len(), self.jacobian.nrows())?;
        check_dim(self.error.len(), self.gain.len())?;
        if self.rows() == 0 {
            return Err(Error::InvalidInput(format!("task {} has no rows", self.id)));
        }
        if self.weight < 0.0 || self.gain.iter().any(|g| *g <= 0.0) {
            return Err(Error::InvalidInput(format!("task {}: bad gain or weight", self.id)));
        }
        Ok(())
    }
}

/// Terms grouped into priority levels: hard levels in ascending order, then
/// all soft tasks as one weighted level.
pub(crate) fn group_levels(terms: &[TaskTerm]) -> Result<Vec<Vec<&TaskTerm>>> {
    let Some(first) = terms.first() else {
        return Err(Error::InvalidInput("empty task stack".into()));
    };
    let n = first.cols();
    for t in terms {
        t.check()?;
        check_dim(n, t.cols())?;
    }
    let mut hard: Vec<u32> = terms
        .iter()
        .filter_map(|t| match t.priority {
            Priority::Hard(l) => Some(l),
            Priority::Soft => None,
        })
        .collect();
    hard.sort_unstable();
    hard.dedup();
    let mut levels: Vec<Vec<&TaskTerm>> = hard
        .iter()
        .map(|l| terms.iter().filter(|t| t.priority == Priority::Hard(*l)).collect())
        .collect();
    let soft: Vec<&TaskTerm> = terms.iter().filter(|t| t.priority == Priority::Soft).collect();
    if !soft.is_empty() {
        levels.push(soft);
    }
    Ok(levels)
}

/// Weighted Jacobian and reference of one level.
pub(crate) fn level_system(level: &[&TaskTerm]) -> (DMatrix<f64>, DVector<f64>) {
    let n = level[0].cols();
    let rows: usize = level.iter().map(|t| t.rows()).sum();
    let mut j = DMatrix::zeros(rows, n);
    let mut r = DVector::zeros(rows);
    let mut at = 0;
    for t in level {
        let k = t.rows();
        j.rows_mut(at, k).copy_from(&(&t.jacobian * t.weight));
        r.rows_mut(at, k).copy_from(&(t.reference() * t.weight));
        at += k;
    }
    (j, r)
}

pub(crate) fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResidual {
    pub id: String,
    /// `Omega e - J qdot`
    pub values: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub qdot: DVector<f64>,
    pub residuals: Vec<TaskResidual>,
    /// Slack norm per priority level.
    pub slack: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl Solution {
    pub(crate) fn assemble(
        terms: &[TaskTerm],
        qdot: DVector<f64>,
        slack: Vec<f64>,
        kkt_residual: f64,
        iterations: usize,
    ) -> Self {
        let residuals = terms
            .iter()
            .map(|t| TaskResidual {
                id: t.id.clone(),
                values: t.reference() - &t.jacobian * &qdot,
            })
            .collect();
        Self {
            qdot,
            residuals,
            slack,
            kkt_residual,
            iterations,
        }
    }

    pub fn residual(&self, id: &str) -> Option<&DVector<f64>> {
        self.residuals.iter().find(|r| r.id == id).map(|r| &r.values)
    }
}

/// How lower-priority contributions are projected in the closed-form solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Each level solves its residual through `(J_k N)^+`, the minimizer of
    /// the level objective inside the higher levels' solution set.
    #[default]
    Successive,
    /// `N_aug J_k^+ Omega e_k` summed over tasks.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm(Projection),
    CascadedQp,
}

/// Robot state seen by the task functions.
#[derive(Debug, Clone)]
pub struct StackState<'a> {
    pub chain: &'a KinematicChain,
    pub q: DVector<f64>,
    pub jaws: [f64; 2],
    /// Contact force on the left pad, sensor frame, newtons.
    pub contact_force: Vector3<f64>,
}

/// Prioritized task list with velocity bounds and control period.
#[derive(Debug, Clone)]
pub struct TaskStack {
    tasks: Vec<TaskSpec>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    dt: f64,
}

impl TaskStack {
    /// `lower`/`upper` bound the full variable vector (arm joints then jaws).
    pub fn new(tasks: Vec<TaskSpec>, lower: DVector<f64>, upper: DVector<f64>, dt: f64) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.len() <= JAW_COUNT {
            return Err(Error::InvalidInput("bounds must cover arm and jaws".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("velocity bounds need l <= u".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let dof = lower.len() - JAW_COUNT;
        for t in &tasks {
            t.validate(dof)?;
        }
        let primaries = tasks.iter().filter(|t| t.priority == Priority::Hard(0)).count();
        if primaries != 1 {
            return Err(Error::InvalidInput(format!(
                "stack needs exactly one hard level-0 task, found {primaries}"
            )));
        }
        Ok(Self { tasks, lower, upper, dt })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bounds(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.lower, &self.upper)
    }

    /// Velocity bounds tightened so one step cannot leave the joint or jaw
    /// range.
    pub fn effective_bounds(&self, state: &StackState) -> Result<(DVector<f64>, DVector<f64>)> {
        let dof = state.chain.dof();
        check_dim(self.lower.len(), dof + JAW_COUNT)?;
        check_dim(dof, state.q.len())?;
        let mut lo = self.lower.clone();
        let mut hi = self.upper.clone();
        for i in 0..dof + JAW_COUNT {
            let (x, xl, xu) = if i < dof {
                (state.q[i], state.chain.lower()[i], state.chain.upper()[i])
            } else {
                (state.jaws[i - dof], 0.0, JAW_MAX)
            };
            lo[i] = lo[i].max(((xl - x) / self.dt).min(0.0));
            hi[i] = hi[i].min(((xu - x) / self.dt).max(0.0));
            if lo[i] > hi[i] {
                lo[i] = hi[i];
            }
        }
        Ok((lo, hi))
    }

    pub fn linearize(&self, state: &StackState) -> Result<Vec<TaskTerm>> {
        let chain = state.chain;
        let dof = chain.dof();
        check_dim(dof, state.q.len())?;
        let nv = dof + JAW_COUNT;
        let (pose, geometric) = chain.evaluate(&state.q)?;
        let j0 = cartesian_rows(&geometric);
        let gripper = pose.orientation().to_rotation_matrix().into_inner();

        let mut out = Vec::with_capacity(self.tasks.len());
        for ts in &self.tasks {
            let rows = ts.kind.rows(dof);
            let mut jac = DMatrix::zeros(rows, nv);
            let error: DVector<f64> = match &ts.kind {
                TaskKind::Cartesian { target } => {
                    jac.columns_mut(0, dof).copy_from(&j0);
                    let e = cartesian_task_error(&pose, target);
                    DVector::from_column_slice(e.as_slice())
                }
                TaskKind::Force { target } => {
                    let sensor_to_base = gripper * pad_to_gripper();
                    let jg = gripper_jacobian(&gripper);
                    jac.view_mut((0, dof), (3, JAW_COUNT)).copy_from(&jg);
                    let desired = sensor_to_base * Vector3::new(0.0, 0.0, *target);
                    let e = force_task_error(&state.contact_force, &desired, &sensor_to_base)?;
                    DVector::from_column_slice(e.as_slice())
                }
                TaskKind::Manipulability { desired } => {
                    jac.columns_mut(0, dof).copy_from(&manipulability_jacobian(&state.q));
                    DVector::from_element(1, desired - manipulability_value(&state.q))
                }
                TaskKind::JointLimit => {
                    jac.columns_mut(0, dof).copy_from(&joint_limit_jacobian(&state.q, chain)?);
                    DVector::from_element(1, -joint_limit_value(&state.q, chain)?)
                }
                TaskKind::Hold { target, stiffness } => {
                    jac.view_mut((0, 0), (dof, dof)).fill_with_identity();
                    let e = cartesian_task_error(&pose, target) * *stiffness;
                    kineto_static_dual(&j0, &DVector::from_column_slice(e.as_slice()))?
                }
                TaskKind::JawPosition { target } => {
                    jac.view_mut((0, dof), (JAW_COUNT, JAW_COUNT)).fill_with_identity();
                    DVector::from_vec(vec![target[0] - state.jaws[0], target[1] - state.jaws[1]])
                }
            };
            out.push(TaskTerm {
                id: ts.id.clone(),
                jacobian: jac,
                error,
                gain: ts.gain_vector(rows),
                weight: ts.weight,
                priority: ts.priority,
            });
        }
        Ok(out)
    }

    pub fn solve(&self, state: &StackState, method: Method, config: &SolverConfig) -> Result<Solution> {
        let terms = self.linearize(state)?;
        match method {
            Method::ClosedForm(p) => {
                let cfg = SolverConfig {
                    projection: p,
                    ..config.clone()
                };
                solve_prioritized(&terms, &cfg)
            }
            Method::CascadedQp => {
                let (lo, hi) = self.effective_bounds(state)?;
                solve_cascaded_qp(&terms, &lo, &hi, config)
            }
        }
    }
}

/// Result of one integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub q: DVector<f64>,
    /// True when any coordinate was clamped to its limit.
    pub saturated: bool,
}

/// `q + qdot dt`, clamped to `[lower, upper]`.
pub fn integrate_clamped(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    dt: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<Step> {
    check_dim(q.len(), qdot.len())?;
    check_dim(q.len(), lower.len())?;
    check_dim(q.len(), upper.len())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let mut out = q + qdot * dt;
    let mut saturated = false;
    for i in 0..out.len() {
        if out[i] > upper[i] {
            out[i] = upper[i];
            saturated = true;
        } else if out[i] < lower[i] {
            out[i] = lower[i];
            saturated = true;
        }
    }
    Ok(Step { q: out, saturated })
}

/// Euler step of the arm joints clamped to the chain limits.
pub fn integrate_step(q: &DVector<f64>, qdot: &DVector<f64>, dt: f64, chain: &KinematicChain) -> Result<Step> {
    check_dim(chain.dof(), q.len())?;
    integrate_clamped(q, qdot, dt, chain.lower(), chain.upper())
}
