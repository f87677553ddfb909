use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix2x3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::{gamma, Pose};
use crate::error::{check_dim, Error, Result};

pub const CHAIN_SCHEMA: &str = "chain.v1";

const DEFAULT_CHAIN: &str = include_str!("../../config/chain_default.toml");

/// One revolute joint in standard Denavit-Hartenberg form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta0: f64,
}

impl DhRow {
    /// `Rz(theta) Tz(d) Tx(a) Rx(alpha)`
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let theta = q + self.theta0;
        let (s, c) = theta.sin_cos();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(self.a * c, self.a * s, self.d), rot)
    }
}

/// On-disk chain description (`chain.v1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub schema: String,
    pub name: String,
    pub reach: f64,
    pub q_lower: Vec<f64>,
    pub q_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_home: Option<Vec<f64>>,
    pub dh: Vec<DhRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    name: String,
    dh: Vec<DhRow>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    home: DVector<f64>,
    reach: f64,
}

impl Default for KinematicChain {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CHAIN, "<builtin chain>").expect("builtin chain is valid")
    }
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        dh: Vec<DhRow>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        reach: f64,
    ) -> Result<Self> {
        let n = dh.len();
        if n == 0 {
            return Err(Error::InvalidInput("chain has no joints".into()));
        }
        check_dim(n, lower.len())?;
        check_dim(n, upper.len())?;
        if !(reach > 0.0) {
            return Err(Error::InvalidInput(format!("reach must be positive, got {reach}")));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "joint {} limits not ordered: {lo} >= {hi}",
                    j + 1
                )));
            }
        }
        let lower = DVector::from_vec(lower);
        let upper = DVector::from_vec(upper);
        let home = (&lower + &upper) * 0.5;
        Ok(Self {
            name: name.into(),
            dh,
            lower,
            upper,
            home,
            reach,
        })
    }

    pub fn with_home(mut self, home: Vec<f64>) -> Result<Self> {
        check_dim(self.dof(), home.len())?;
        let home = DVector::from_vec(home);
        if !self.within_limits(&home) {
            return Err(Error::InvalidInput("home configuration outside joint limits".into()));
        }
        self.home = home;
        Ok(self)
    }

    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        if cfg.schema != CHAIN_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported chain schema '{}', expected '{CHAIN_SCHEMA}'",
                cfg.schema
            )));
        }
        let chain = Self::new(
            cfg.name.clone(),
            cfg.dh.clone(),
            cfg.q_lower.clone(),
            cfg.q_upper.clone(),
            cfg.reach,
        )?;
        match &cfg.q_home {
            Some(home) => chain.with_home(home.clone()),
            None => Ok(chain),
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: ChainConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        Self::from_config(&cfg).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_config(&self) -> ChainConfig {
        ChainConfig {
            schema: CHAIN_SCHEMA.to_string(),
            name: self.name.clone(),
            reach: self.reach,
            q_lower: self.lower.iter().copied().collect(),
            q_upper: self.upper.iter().copied().collect(),
            q_home: Some(self.home.iter().copied().collect()),
            dh: self.dh.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.dh.len()
    }

    pub fn dh(&self) -> &[DhRow] {
        &self.dh
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn home(&self) -> &DVector<f64> {
        &self.home
    }

    /// Midpoint of every joint range.
    pub fn midpoints(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dof()
            && q.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_dim(self.dof(), q.len())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("joint vector has non-finite entries".into()));
        }
        Ok(())
    }

    /// Frames `T_0 .. T_n` of every link in the base frame; `T_0` is the base
    /// and `T_n` the end-effector.
    pub fn frames(&self, q: &DVector<f64>) -> Result<Vec<Isometry3<f64>>> {
        self.check_q(q)?;
        let mut out = Vec::with_capacity(self.dof() + 1);
        let mut t = Isometry3::identity();
        out.push(t);
        for (row, qi) in self.dh.iter().zip(q.iter()) {
            t *= row.transform(*qi);
            out.push(t);
        }
        Ok(out)
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Pose> {
        let frames = self.frames(q)?;
        Ok(Pose::from_isometry(frames.last().expect("non-empty chain")))
    }

    /// Geometric Jacobian, linear rows on top of angular rows.
    pub fn geometric_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let frames = self.frames(q)?;
        Ok(jacobian_from_frames(&frames))
    }

    /// `[J_p; Gamma J_o]`, the 5-row Jacobian of the Cartesian task.
    pub fn analytic_cartesian_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.geometric_jacobian(q)?;
        Ok(cartesian_rows(&j))
    }

    /// Pose and both Jacobians from a single kinematic pass.
    pub fn evaluate(&self, q: &DVector<f64>) -> Result<(Pose, DMatrix<f64>)> {
        let frames = self.frames(q)?;
        let pose = Pose::from_isometry(frames.last().expect("non-empty chain"));
        Ok((pose, jacobian_from_frames(&frames)))
    }

    /// Joint origins in the base frame, base first, end-effector last.
    pub fn joint_positions(&self, q: &DVector<f64>) -> Result<Vec<Vector3<f64>>> {
        Ok(self
            .frames(q)?
            .iter()
            .map(|f| f.translation.vector)
            .collect())
    }
}

fn jacobian_from_frames(frames: &[Isometry3<f64>]) -> DMatrix<f64> {
    let n = frames.len() - 1;
    let pe = frames[n].translation.vector;
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        // joint i+1 rotates about z of frame i
        let z = frames[i].rotation * Vector3::z();
        let p = frames[i].translation.vector;
        let lin = z.cross(&(pe - p));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

/// Stacks the linear rows over `Gamma` times the angular rows.
pub fn cartesian_rows(geometric: &DMatrix<f64>) -> DMatrix<f64> {
    let n = geometric.ncols();
    let g: Matrix2x3<f64> = gamma();
    let mut out = DMatrix::zeros(5, n);
    out.rows_mut(0, 3).copy_from(&geometric.rows(0, 3));
    let ang = geometric.rows(3, 3);
    for c in 0..n {
        let col = g * Vector3::new(ang[(0, c)], ang[(1, c)], ang[(2, c)]);
        out[(3, c)] = col.x;
        out[(4, c)] = col.y;
    }
    out
}
