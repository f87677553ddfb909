//! Scenario files (`scenario.v1`, TOML).

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::FsmConfig;
use crate::kinematics::KinematicChain;
use crate::perception::{
    BodyConfig, CameraExtrinsics, CameraIntrinsics, DetectionConfig, LeaderKeyframe, LeaderScript, ObjectSpec,
    Occluder, SceneConfig,
};
use crate::stack::SolverConfig;
use crate::tactile::{CalibrationModel, ContactModel, FrictionParams, TrainConfig};

pub const SCENARIO_SCHEMA: &str = "scenario.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub control_hz: u32,
    pub tracking_hz: u32,
    pub detection_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            control_hz: 1000,
            tracking_hz: 5,
            detection_hz: 25,
        }
    }
}

impl Rates {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    /// Control ticks between tracking frames.
    pub fn tracking_period(&self) -> u64 {
        (self.control_hz / self.tracking_hz) as u64
    }

    pub fn detection_period(&self) -> u64 {
        (self.control_hz / self.detection_hz) as u64
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("control_hz", self.control_hz),
            ("tracking_hz", self.tracking_hz),
            ("detection_hz", self.detection_hz),
        ] {
            if v == 0 {
                return Err(format!("rates.{name} must be positive"));
            }
        }
        for (name, v) in [("tracking_hz", self.tracking_hz), ("detection_hz", self.detection_hz)] {
            if self.control_hz % v != 0 {
                return Err(format!("rates.{name} must divide control_hz"));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box the follower works in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: [0.0, -0.5, 0.0],
            max: [0.8, 0.5, 0.8],
        }
    }
}

impl Workspace {
    pub fn diagonal(&self) -> f64 {
        (Vector3::from(self.max) - Vector3::from(self.min)).norm()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Fixed camera watching the leader, placed with a look-at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingCamera {
    pub intrinsics: CameraIntrinsics,
    pub eye: [f64; 3],
    pub target: [f64; 3],
}

impl Default for TrackingCamera {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            eye: [-0.3, -0.2, 0.9],
            target: [0.45, 0.45, 0.2],
        }
    }
}

impl TrackingCamera {
    pub fn extrinsics(&self) -> Result<CameraExtrinsics> {
        CameraExtrinsics::look_at(Vector3::from(self.eye), Vector3::from(self.target))
    }
}

/// Eye-in-hand camera: offset in the end-effector frame, optical axis along
/// the tool `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionCamera {
    pub intrinsics: CameraIntrinsics,
    pub offset: [f64; 3],
}

impl Default for DetectionCamera {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            offset: [0.06, 0.0, 0.0],
        }
    }
}

impl DetectionCamera {
    pub fn camera_to_ee(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(Vector3::from(self.offset)), UnitQuaternion::identity())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Tracking frames in the moving average.
    pub window: usize,
    /// Seconds an occluded wrist keeps its last estimate.
    pub horizon: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { window: 3, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Pad stiffness, N/m.
    pub stiffness: f64,
    /// Mass of a held object, kg; its weight loads the pads in shear.
    pub object_mass: f64,
    /// Vertical slack (m) around an object's extent within which the jaws
    /// can touch it.
    pub reach_margin: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 1500.0,
            object_mass: 0.05,
            reach_margin: 0.01,
        }
    }
}

impl ContactConfig {
    pub fn model(&self) -> ContactModel {
        ContactModel {
            stiffness: self.stiffness,
        }
    }
}

/// Calibration data and training for the deformation-to-force network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TactileConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub noise: f64,
    pub depth_max: f64,
    pub shear_max: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub rmse_bound: f64,
}

impl Default for TactileConfig {
    fn default() -> Self {
        let c = CalibrationModel::default();
        let t = TrainConfig::default();
        Self {
            train_samples: 100,
            test_samples: 20,
            noise: c.noise,
            depth_max: c.depth_max,
            shear_max: c.shear_max,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            rmse_bound: t.rmse_bound,
        }
    }
}

impl TactileConfig {
    pub fn calibration(&self, contact: &ContactModel) -> CalibrationModel {
        CalibrationModel {
            stiffness: nalgebra::Matrix3::identity() * contact.k_mm(),
            noise: self.noise,
            depth_max: self.depth_max,
            shear_max: self.shear_max,
            centered: false,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            rmse_bound: self.rmse_bound,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Extra shear load on the pads.
    Slip,
}

/// Disturbance injected once per trial, timed from the first Manipulate
/// entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub kind: FaultKind,
    pub delay: f64,
    pub duration: f64,
    /// N, along the sensor `x` axis.
    pub shear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    /// Task label used in reports.
    pub task: String,
    /// Chain description, relative to the scenario file.
    pub chain: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Upper bound on one trial, seconds.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Half-width of the uniform per-trial shift of every object in x and y.
    #[serde(default)]
    pub object_jitter: f64,
    /// Half-width of the uniform per-trial shift of the leader's working
    /// keyframes (those without the home flag) in x and y.
    #[serde(default)]
    pub leader_jitter: f64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fsm: FsmConfig,
    #[serde(default)]
    pub friction: FrictionParams,
    #[serde(default)]
    pub workspace: Workspace,
    #[serde(default)]
    pub tracking_camera: TrackingCamera,
    #[serde(default)]
    pub detection_camera: DetectionCamera,
    #[serde(default)]
    pub body: BodyConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub tactile: TactileConfig,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    pub leader: Vec<LeaderKeyframe>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    /// Directory the scenario was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    5
}

fn default_duration() -> f64 {
    30.0
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &path.display().to_string(), base)
    }

    pub fn from_toml_str(text: &str, origin: &str, base_dir: PathBuf) -> Result<Self> {
        let config = |message: String| Error::Config {
            path: origin.to_owned(),
            message,
        };
        let mut s: Scenario = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        s.base_dir = base_dir;
        s.validate().map_err(config)?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn chain_path(&self) -> PathBuf {
        if self.chain.is_absolute() {
            self.chain.clone()
        } else {
            self.base_dir.join(&self.chain)
        }
    }

    pub fn load_chain(&self) -> Result<KinematicChain> {
        KinematicChain::load(self.chain_path())
    }

    pub fn leader_script(&self) -> Result<LeaderScript> {
        LeaderScript::new(self.leader.clone())
    }

    /// Checks every field and that the chain file exists and parses.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(format!("schema: expected {SCENARIO_SCHEMA:?}, got {:?}", self.schema));
        }
        if self.name.is_empty() || self.task.is_empty() {
            return Err("name and task must be non-empty".into());
        }
        if self.chain.as_os_str().is_empty() {
            return Err("chain: missing chain reference".into());
        }
        let chain = KinematicChain::load(self.chain_path()).map_err(|e| format!("chain: {e}"))?;
        if self.trials == 0 {
            return Err("trials must be >= 1".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err("duration must be positive".into());
        }
        for (name, v) in [("object_jitter", self.object_jitter), ("leader_jitter", self.leader_jitter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative"));
            }
        }
        self.rates.validate()?;
        self.solver.validate().map_err(|e| format!("solver: {e}"))?;
        self.fsm.validate().map_err(|e| format!("fsm: {e}"))?;
        self.friction.validate().map_err(|e| format!("friction: {e}"))?;
        for k in 0..3 {
            if !(self.workspace.min[k] < self.workspace.max[k]) {
                return Err("workspace: min must be below max on every axis".into());
            }
        }
        self.tracking_camera.intrinsics.validate().map_err(|e| format!("tracking_camera: {e}"))?;
        self.tracking_camera.extrinsics().map_err(|e| format!("tracking_camera: {e}"))?;
        self.detection_camera.intrinsics.validate().map_err(|e| format!("detection_camera: {e}"))?;
        if self.filter.window == 0 || !(self.filter.horizon > 0.0) {
            return Err("filter: window and horizon must be positive".into());
        }
        if self.scene.stride == 0 {
            return Err("scene.stride must be >= 1".into());
        }
        if !(self.contact.stiffness > 0.0) || !(self.contact.object_mass >= 0.0) || !(self.contact.reach_margin >= 0.0) {
            return Err("contact: stiffness must be positive, mass and margin non-negative".into());
        }
        if self.tactile.train_samples < 2 || self.tactile.test_samples == 0 {
            return Err("tactile: need at least 2 training and 1 test sample".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            o.validate().map_err(|e| format!("objects[{i}]: {e}"))?;
        }
        LeaderScript::new(self.leader.clone()).map_err(|e| format!("leader: {e}"))?;
        for (i, f) in self.faults.iter().enumerate() {
            if !(f.delay >= 0.0 && f.duration > 0.0 && f.shear.is_finite()) {
                return Err(format!("faults[{i}]: delay must be >= 0, duration > 0"));
            }
        }
        if chain.dof() != 7 {
            return Err(format!("chain: the trajectory log needs 7 joints, chain has {}", chain.dof()));
        }
        Ok(())
    }
}
