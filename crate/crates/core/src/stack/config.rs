use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Priority, Projection, JAW_COUNT};
use crate::error::{Error, Result};

pub const SOLVER_SCHEMA: &str = "solver.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub cartesian: f64,
    pub force: f64,
    pub manipulability: f64,
    pub joint_limit: f64,
    pub jaw: f64,
    /// Stiffness of the joint-space hold spring.
    pub hold_stiffness: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            cartesian: 2.0,
            force: 1.0,
            manipulability: 1.0,
            joint_limit: 1.0,
            jaw: 5.0,
            hold_stiffness: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Alphas {
    pub primary: f64,
    pub manipulability: f64,
    pub joint_limit: f64,
}

impl Default for Alphas {
    fn default() -> Self {
        Self {
            primary: 1.0,
            manipulability: 0.5,
            joint_limit: 0.5,
        }
    }
}

/// Symmetric speed limits: rad/s for arm joints, m/s for each jaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdotBounds {
    pub arm: f64,
    pub jaw: f64,
}

impl Default for QdotBounds {
    fn default() -> Self {
        Self { arm: 1.5, jaw: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub schema: String,
    pub damping: f64,
    /// Damping of the soft level. The soft potentials have gradients that
    /// vanish at their minima, so they need more regularization than the
    /// hard levels.
    pub soft_damping: f64,
    pub gains: Gains,
    pub alphas: Alphas,
    pub qdot_bounds: QdotBounds,
    pub qp_tolerance: f64,
    pub max_active_set_iters: usize,
    pub projection: Projection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schema: SOLVER_SCHEMA.into(),
            damping: 1e-4,
            soft_damping: 0.05,
            gains: Gains::default(),
            alphas: Alphas::default(),
            qdot_bounds: QdotBounds::default(),
            qp_tolerance: 1e-10,
            max_active_set_iters: 100,
            projection: Projection::Successive,
        }
    }
}

impl SolverConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: SolverConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|message| Error::Config {
            path: origin.into(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema != SOLVER_SCHEMA {
            return Err(format!("schema must be {SOLVER_SCHEMA}, got {}", self.schema));
        }
        let g = &self.gains;
        let positive = [
            ("gains.cartesian", g.cartesian),
            ("gains.force", g.force),
            ("gains.manipulability", g.manipulability),
            ("gains.joint_limit", g.joint_limit),
            ("gains.jaw", g.jaw),
            ("gains.hold_stiffness", g.hold_stiffness),
            ("qdot_bounds.arm", self.qdot_bounds.arm),
            ("qdot_bounds.jaw", self.qdot_bounds.jaw),
            ("qp_tolerance", self.qp_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        let a = &self.alphas;
        for (name, v) in [
            ("alphas.primary", a.primary),
            ("alphas.manipulability", a.manipulability),
            ("alphas.joint_limit", a.joint_limit),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0"));
            }
        }
        for (name, v) in [("damping", self.damping), ("soft_damping", self.soft_damping)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0"));
            }
        }
        if self.max_active_set_iters == 0 {
            return Err("max_active_set_iters must be >= 1".into());
        }
        Ok(())
    }

    pub fn level_damping(&self, priority: Priority) -> f64 {
        match priority {
            Priority::Hard(_) => self.damping,
            Priority::Soft => self.soft_damping,
        }
    }

    /// Static velocity bounds for `dof` arm joints followed by the jaws.
    pub fn velocity_bounds(&self, dof: usize) -> (DVector<f64>, DVector<f64>) {
        let upper = DVector::from_fn(dof + JAW_COUNT, |i, _| {
            if i < dof {
                self.qdot_bounds.arm
            } else {
                self.qdot_bounds.jaw
            }
        });
        (-upper.clone(), upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = SolverConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(SolverConfig::from_toml_str(&text, "mem").unwrap(), cfg);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = SolverConfig::from_toml_str("schema = \"solver.v1\"\ndamping = 0.01\n", "mem").unwrap();
        assert_eq!(cfg.damping, 0.01);
        assert_eq!(cfg.qp_tolerance, 1e-10);
        assert_eq!(cfg.max_active_set_iters, 100);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SolverConfig::from_toml_str("schema = \"solver.v2\"", "mem").is_err());
        assert!(SolverConfig::from_toml_str("[gains]\ncartesian = -1.0", "mem").is_err());
        assert!(SolverConfig::from_toml_str("bogus = 1", "mem").is_err());
    }
}
