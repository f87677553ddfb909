//! Phase machine driving the task stack from leader posture, object
//! detections and tactile contact.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{KinematicChain, Pose};
use crate::perception::{select_nearest, Gestures, ObjectDetection};
use crate::stack::{Priority, SolverConfig, TaskKind, TaskSpec, TaskStack, JAW_MAX};
use crate::tactile::{DeformationVector, FrictionParams, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Homing,
    PreGrasp,
    Grasp,
    Manipulate,
    Release,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Homing, Phase::PreGrasp, Phase::Grasp, Phase::Manipulate, Phase::Release];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Homing => "homing",
            Phase::PreGrasp => "pre_grasp",
            Phase::Grasp => "grasp",
            Phase::Manipulate => "manipulate",
            Phase::Release => "release",
        }
    }

    /// Phases whose stack has the grip force as primary task.
    pub fn force_primary(self) -> bool {
        matches!(self, Phase::Grasp | Phase::Manipulate)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown phase {s:?}")))
    }
}

/// The eight edges of the switching graph.
pub fn is_edge(from: Phase, to: Phase) -> bool {
    use Phase::*;
    matches!(
        (from, to),
        (Homing, PreGrasp)
            | (PreGrasp, Homing)
            | (PreGrasp, Grasp)
            | (Grasp, PreGrasp)
            | (Grasp, Manipulate)
            | (Manipulate, Grasp)
            | (Manipulate, Release)
            | (Release, Homing)
    )
}

/// Checks that `phases` starts in Homing and only follows graph edges.
/// Repeated entries are allowed and collapsed.
pub fn validate_path(phases: &[Phase]) -> Result<()> {
    let Some(first) = phases.first() else {
        return Err(Error::LogFormat("empty phase sequence".into()));
    };
    if *first != Phase::Homing {
        return Err(Error::LogFormat(format!("run starts in {first}, not homing")));
    }
    for w in phases.windows(2) {
        if w[0] != w[1] && !is_edge(w[0], w[1]) {
            return Err(Error::LogFormat(format!("illegal transition {} -> {}", w[0], w[1])));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    WristDetected,
    Withdraw,
    ObjectDetected,
    GraspFailure,
    GraspStable,
    Slip,
    OpenPalm,
    LeaderHome,
}

impl Trigger {
    pub const ALL: [Trigger; 8] = [
        Trigger::WristDetected,
        Trigger::Withdraw,
        Trigger::ObjectDetected,
        Trigger::GraspFailure,
        Trigger::GraspStable,
        Trigger::Slip,
        Trigger::OpenPalm,
        Trigger::LeaderHome,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::WristDetected => "wrist_detected",
            Trigger::Withdraw => "withdraw",
            Trigger::ObjectDetected => "object_detected",
            Trigger::GraspFailure => "grasp_failure",
            Trigger::GraspStable => "grasp_stable",
            Trigger::Slip => "slip",
            Trigger::OpenPalm => "open_palm",
            Trigger::LeaderHome => "leader_home",
        }
    }
}

impl FromStr for Trigger {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trigger::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown trigger {s:?}")))
    }
}

/// How the wrist height scales into setpoint heights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightMode {
    /// `z = k |Z_w|`
    #[default]
    Absolute,
    /// `z = Z_w + k |Z_w|`
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmConfig {
    /// Perception older than this (s) cannot fire a transition.
    pub staleness: f64,
    /// Time in PreGrasp after settling without a detection before withdrawing.
    pub withdraw_timeout: f64,
    /// Time from the start of jaw closing (or from entry while still
    /// approaching) before a grasp counts as failed.
    pub grasp_timeout: f64,
    /// End-effector position error (m) that counts as arrived.
    pub settle_tolerance: f64,
    /// Grip force target, N.
    pub grip_force: f64,
    /// Grip force multiplier applied on each recovery.
    pub recovery_grip_scale: f64,
    pub max_grip_force: f64,
    pub pregrasp_factor: f64,
    pub lift_factor: f64,
    pub height_mode: HeightMode,
    /// Wrist heights at or below this are rejected.
    pub floor_z: f64,
    /// Jaw opening fraction required before homing.
    pub jaw_open_fraction: f64,
    /// Consecutive tracking frames the open palm must be seen.
    pub palm_frames: usize,
    /// Largest filter-window spread (m) for the wrist posture to count as held.
    pub posture_spread: f64,
    pub manipulability_target: f64,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            staleness: 0.6,
            withdraw_timeout: 2.0,
            grasp_timeout: 3.0,
            settle_tolerance: 0.005,
            grip_force: 5.0,
            recovery_grip_scale: 1.5,
            max_grip_force: 15.0,
            pregrasp_factor: 4.0,
            lift_factor: 2.0,
            height_mode: HeightMode::Absolute,
            floor_z: 0.0,
            jaw_open_fraction: 0.95,
            palm_frames: 2,
            posture_spread: 0.01,
            manipulability_target: 1.2,
        }
    }
}

impl FsmConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("staleness", self.staleness),
            ("withdraw_timeout", self.withdraw_timeout),
            ("grasp_timeout", self.grasp_timeout),
            ("settle_tolerance", self.settle_tolerance),
            ("grip_force", self.grip_force),
            ("recovery_grip_scale", self.recovery_grip_scale),
            ("max_grip_force", self.max_grip_force),
            ("pregrasp_factor", self.pregrasp_factor),
            ("lift_factor", self.lift_factor),
            ("posture_spread", self.posture_spread),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.jaw_open_fraction) {
            return Err("jaw_open_fraction must be in [0, 1]".into());
        }
        if self.palm_frames == 0 {
            return Err("palm_frames must be >= 1".into());
        }
        if !self.floor_z.is_finite() || !self.manipulability_target.is_finite() {
            return Err("floor_z and manipulability_target must be finite".into());
        }
        Ok(())
    }

    fn height(&self, z_w: f64, factor: f64) -> f64 {
        match self.height_mode {
            HeightMode::Absolute => factor * z_w.abs(),
            HeightMode::Offset => z_w + factor * z_w.abs(),
        }
    }

    fn check_wrist(&self, wrist: &Vector3<f64>) -> Result<()> {
        if wrist.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWrist("non-finite position".into()));
        }
        if wrist.z <= self.floor_z {
            return Err(Error::InvalidWrist(format!(
                "height {} is at or below the floor {}",
                wrist.z, self.floor_z
            )));
        }
        Ok(())
    }
}

/// Tool axis pointing straight down, rotated by `yaw` about the base `z`.
pub fn tool_down(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI)
}

/// Vertically above the wrist at `4 |Z_w|` (by default), tool down.
pub fn pregrasp_setpoint(wrist: &Vector3<f64>, cfg: &FsmConfig) -> Result<Pose> {
    cfg.check_wrist(wrist)?;
    let z = cfg.height(wrist.z, cfg.pregrasp_factor);
    Ok(Pose::new(Vector3::new(wrist.x, wrist.y, z), tool_down(0.0)))
}

/// Vertical lift from the grasp to `2 |Z_w|` (by default), orientation kept.
pub fn lift_setpoint(wrist: &Vector3<f64>, grasp: &Pose, cfg: &FsmConfig) -> Result<Pose> {
    cfg.check_wrist(wrist)?;
    let z = cfg.height(wrist.z, cfg.lift_factor);
    Ok(Pose::new(
        Vector3::new(grasp.position.x, grasp.position.y, z),
        *grasp.orientation(),
    ))
}

/// Grasp at the detected centroid with the tool pointing down.
pub fn grasp_pose(detection: &ObjectDetection) -> Pose {
    Pose::new(detection.pose_base.position, tool_down(0.0))
}

/// True once the flag has been seen on `needed` consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Debounce {
    needed: usize,
    count: usize,
}

impl Debounce {
    pub fn new(needed: usize) -> Self {
        Self { needed, count: 0 }
    }

    pub fn update(&mut self, flag: bool) -> bool {
        self.count = if flag { self.count + 1 } else { 0 };
        self.active()
    }

    pub fn active(&self) -> bool {
        self.count >= self.needed
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }
}

/// Filtered active-arm output delivered on a tracking frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingUpdate {
    pub stamp: f64,
    /// `None` when the arm was not usable in this frame.
    pub wrist: Option<Vector3<f64>>,
    /// Spread of the filter window around `wrist`, meters.
    pub spread: f64,
    pub gestures: Gestures,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileReading {
    pub deformation: DeformationVector,
    /// Sensor-frame force, N.
    pub force: Vector3<f64>,
    pub verdict: Verdict,
}

/// Everything the machine sees on one control tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: f64,
    pub tracking: Option<TrackingUpdate>,
    /// A detection frame delivered on this tick with its capture time.
    pub detections: Option<(f64, &'a [ObjectDetection])>,
    pub tactile: Option<TactileReading>,
    pub ee: Pose,
    pub jaws: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub from: Phase,
    pub to: Phase,
    pub trigger: Trigger,
    pub wrist_z: f64,
    pub setpoint_z: f64,
}

/// Sub-mode inside Grasp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspMode {
    Approach,
    Close,
}

#[derive(Debug, Clone)]
pub struct Fsm {
    cfg: FsmConfig,
    friction: FrictionParams,
    home: Pose,
    phase: Phase,
    entered_at: f64,
    setpoint: Pose,
    grasp: Option<Pose>,
    grasp_mode: GraspMode,
    close_started: Option<f64>,
    settled_at: Option<f64>,
    grip: f64,
    wrist: Option<Vector3<f64>>,
    wrist_seen: f64,
    spread: f64,
    gestures: Gestures,
    palm: Debounce,
    detections: Option<(f64, Vec<ObjectDetection>)>,
    target: Option<ObjectDetection>,
    history: Vec<Transition>,
}

impl Fsm {
    pub fn new(cfg: FsmConfig, friction: FrictionParams, home: Pose) -> Result<Self> {
        cfg.validate().map_err(Error::InvalidInput)?;
        friction.validate()?;
        let palm = Debounce::new(cfg.palm_frames);
        let grip = cfg.grip_force;
        Ok(Self {
            cfg,
            friction,
            home,
            phase: Phase::Homing,
            entered_at: 0.0,
            setpoint: home,
            grasp: None,
            grasp_mode: GraspMode::Approach,
            close_started: None,
            settled_at: None,
            grip,
            wrist: None,
            wrist_seen: f64::NEG_INFINITY,
            spread: f64::INFINITY,
            gestures: Gestures::default(),
            palm,
            detections: None,
            target: None,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &FsmConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn setpoint(&self) -> &Pose {
        &self.setpoint
    }

    pub fn grasp_mode(&self) -> GraspMode {
        self.grasp_mode
    }

    /// Current grip force target; zero while approaching.
    pub fn grip_target(&self) -> f64 {
        match self.phase {
            Phase::Grasp if self.grasp_mode == GraspMode::Approach => 0.0,
            Phase::Grasp | Phase::Manipulate => self.grip,
            _ => 0.0,
        }
    }

    pub fn wrist(&self) -> Option<Vector3<f64>> {
        self.wrist
    }

    pub fn target(&self) -> Option<&ObjectDetection> {
        self.target.as_ref()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.history
    }

    fn tracking_fresh(&self, t: f64) -> bool {
        t - self.wrist_seen <= self.cfg.staleness
    }

    fn settled(&self, ee: &Pose) -> bool {
        (ee.position - self.setpoint.position).norm() < self.cfg.settle_tolerance
    }

    /// Advances one tick and returns the transition taken, if any.
    pub fn step(&mut self, obs: &Observation) -> Option<Transition> {
        let t = obs.t;
        if let Some(tr) = obs.tracking {
            if let Some(w) = tr.wrist {
                self.wrist = Some(w);
                self.wrist_seen = tr.stamp;
                self.spread = tr.spread;
                self.gestures = tr.gestures;
                self.palm.update(tr.gestures.open_palm);
            } else {
                self.palm.reset();
            }
        }
        if let Some((stamp, dets)) = obs.detections {
            self.detections = Some((stamp, dets.to_vec()));
        }

        let next = match self.phase {
            Phase::Homing => self.from_homing(obs),
            Phase::PreGrasp => self.from_pregrasp(obs),
            Phase::Grasp => self.from_grasp(obs),
            Phase::Manipulate => self.from_manipulate(obs),
            Phase::Release => self.from_release(obs),
        };
        let (to, trigger) = next?;
        match self.enter(to, trigger, obs) {
            Ok(tr) => Some(tr),
            Err(e) => {
                warn!("t={t:.3}: {} -> {to} on {} ignored: {e}", self.phase, trigger.as_str());
                None
            }
        }
    }

    fn from_homing(&mut self, obs: &Observation) -> Option<(Phase, Trigger)> {
        let ready = self.wrist.is_some()
            && self.tracking_fresh(obs.t)
            && !self.gestures.home
            && self.spread <= self.cfg.posture_spread
            && self.settled(&obs.ee);
        ready.then_some((Phase::PreGrasp, Trigger::WristDetected))
    }

    fn from_pregrasp(&mut self, obs: &Observation) -> Option<(Phase, Trigger)> {
        if self.settled_at.is_none() && self.settled(&obs.ee) {
            self.settled_at = Some(obs.t);
        }
        let settled_at = self.settled_at?;
        if let Some((stamp, dets)) = self.detections.take() {
            let usable = stamp >= settled_at && obs.t - stamp <= self.cfg.staleness;
            if usable {
                let wrist = self.wrist.unwrap_or(obs.ee.position);
                if let Some(d) = select_nearest(&dets, &wrist) {
                    self.target = Some(d.clone());
                    return Some((Phase::Grasp, Trigger::ObjectDetected));
                }
            }
        }
        (obs.t - settled_at >= self.cfg.withdraw_timeout).then_some((Phase::Homing, Trigger::Withdraw))
    }

    fn from_grasp(&mut self, obs: &Observation) -> Option<(Phase, Trigger)> {
        if self.grasp_mode == GraspMode::Approach && self.settled(&obs.ee) {
            debug!("t={:.3}: grasp approach done, closing", obs.t);
            self.grasp_mode = GraspMode::Close;
            self.close_started = Some(obs.t);
        }
        if let Some(r) = obs.tactile {
            if self.grasp_mode == GraspMode::Close
                && r.force.norm() >= self.friction.contact_threshold
                && r.verdict == Verdict::Stable
            {
                return Some((Phase::Manipulate, Trigger::GraspStable));
            }
        }
        let start = self.close_started.unwrap_or(self.entered_at);
        (obs.t - start >= self.cfg.grasp_timeout).then_some((Phase::PreGrasp, Trigger::GraspFailure))
    }

    fn from_manipulate(&mut self, obs: &Observation) -> Option<(Phase, Trigger)> {
        if let Some(r) = obs.tactile {
            if r.verdict == Verdict::Slip || r.force.norm() < self.friction.contact_threshold {
                return Some((Phase::Grasp, Trigger::Slip));
            }
        }
        (self.palm.active() && self.tracking_fresh(obs.t)).then_some((Phase::Release, Trigger::OpenPalm))
    }

    fn from_release(&mut self, obs: &Observation) -> Option<(Phase, Trigger)> {
        let open = obs.jaws.iter().all(|g| *g >= self.cfg.jaw_open_fraction * JAW_MAX);
        (open && self.gestures.home && self.tracking_fresh(obs.t)).then_some((Phase::Homing, Trigger::LeaderHome))
    }

    fn enter(&mut self, to: Phase, trigger: Trigger, obs: &Observation) -> Result<Transition> {
        let wrist = self.wrist.unwrap_or(obs.ee.position);
        let setpoint = match to {
            Phase::Homing => self.home,
            Phase::PreGrasp => pregrasp_setpoint(&wrist, &self.cfg)?,
            Phase::Grasp if self.phase == Phase::Manipulate => obs.ee,
            Phase::Grasp => {
                let target = self
                    .target
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("no selected object".into()))?;
                grasp_pose(target)
            }
            Phase::Manipulate => {
                let grasp = self.grasp.unwrap_or(obs.ee);
                lift_setpoint(&wrist, &grasp, &self.cfg)?
            }
            Phase::Release => obs.ee,
        };
        match to {
            Phase::Grasp if self.phase == Phase::Manipulate => {
                self.grasp_mode = GraspMode::Close;
                self.close_started = Some(obs.t);
                self.grip = (self.grip * self.cfg.recovery_grip_scale).min(self.cfg.max_grip_force);
            }
            Phase::Grasp => {
                self.grasp = Some(setpoint);
                self.grasp_mode = GraspMode::Approach;
                self.close_started = None;
                self.grip = self.cfg.grip_force;
            }
            Phase::PreGrasp => {
                self.settled_at = None;
                self.detections = None;
                self.target = None;
            }
            Phase::Release => self.palm.reset(),
            _ => {}
        }
        let tr = Transition {
            t: obs.t,
            from: self.phase,
            to,
            trigger,
            wrist_z: wrist.z,
            setpoint_z: setpoint.position.z,
        };
        debug!("t={:.3}: {} -> {} ({})", obs.t, tr.from, tr.to, trigger.as_str());
        self.phase = to;
        self.entered_at = obs.t;
        self.setpoint = setpoint;
        self.history.push(tr.clone());
        Ok(tr)
    }

    /// Stack for the current phase: Cartesian primary with open jaws outside
    /// contact, grip force primary with a pose hold (Grasp) or the lift
    /// target (Manipulate) in contact. Manipulability and joint-limit tasks
    /// are always the soft level.
    pub fn build_stack(&self, chain: &KinematicChain, solver: &SolverConfig, dt: f64) -> Result<TaskStack> {
        let g = &solver.gains;
        let a = &solver.alphas;
        let mut tasks = Vec::with_capacity(4);
        if self.phase.force_primary() {
            tasks.push(
                TaskSpec::new("force", TaskKind::Force { target: self.grip_target() }, Priority::Hard(0))
                    .with_gain(g.force)
                    .with_weight(a.primary),
            );
            let motion = if self.phase == Phase::Grasp {
                TaskSpec::new(
                    "hold",
                    TaskKind::Hold {
                        target: self.setpoint,
                        stiffness: g.hold_stiffness,
                    },
                    Priority::Hard(1),
                )
            } else {
                TaskSpec::new("cartesian", TaskKind::Cartesian { target: self.setpoint }, Priority::Hard(1))
                    .with_gain(g.cartesian)
            };
            tasks.push(motion.with_weight(a.primary));
        } else {
            tasks.push(
                TaskSpec::new("cartesian", TaskKind::Cartesian { target: self.setpoint }, Priority::Hard(0))
                    .with_gain(g.cartesian)
                    .with_weight(a.primary),
            );
            tasks.push(
                TaskSpec::new("jaws", TaskKind::JawPosition { target: [JAW_MAX; 2] }, Priority::Hard(1))
                    .with_gain(g.jaw)
                    .with_weight(a.primary),
            );
        }
        tasks.push(
            TaskSpec::new(
                "manipulability",
                TaskKind::Manipulability {
                    desired: self.cfg.manipulability_target,
                },
                Priority::Soft,
            )
            .with_gain(g.manipulability)
            .with_weight(a.manipulability),
        );
        tasks.push(
            TaskSpec::new("joint_limit", TaskKind::JointLimit, Priority::Soft)
                .with_gain(g.joint_limit)
                .with_weight(a.joint_limit),
        );
        let (lo, hi) = solver.velocity_bounds(chain.dof());
        TaskStack::new(tasks, lo, hi, dt)
    }
}
