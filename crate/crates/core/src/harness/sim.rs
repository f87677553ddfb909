//! The multi-rate simulation loop.

use std::time::Instant;

use ::log::{debug, info, warn};
use nalgebra::{DVector, Isometry3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{FaultKind, Scenario};
use crate::error::Result;
use crate::fsm::{Fsm, GraspMode, Observation, Phase, TactileReading, TrackingUpdate, Transition};
use crate::kinematics::{KinematicChain, Pose};
use crate::metrics::{jaw_token, LogBounds, Record, TrialLog};
use crate::perception::{
    detect_objects, render_scene, synth_skeleton, ActiveArmFilter, CameraExtrinsics, LeaderKeyframe, LeaderScript,
    ObjectDetection, ObjectShape, ObjectSpec,
};
use crate::stack::{integrate_clamped, integrate_step, Method, StackState, JAW_COUNT, JAW_MAX};
use crate::tactile::{
    check_friction_cone, force_to_base, interpolate_taxels, synth_frame, DeformationVector, ForceMapper, SensorId,
    TactileClock, TrainReport, Verdict,
};

/// Leader state driven by commands instead of keyframes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveLeader {
    pub wrist: Vector3<f64>,
    pub open_palm: bool,
    pub home: bool,
    pub visible: bool,
}

#[derive(Debug, Clone)]
pub enum LeaderSource {
    Script(LeaderScript),
    Live(LiveLeader),
}

impl LeaderSource {
    fn script(&self) -> Result<LeaderScript> {
        match self {
            LeaderSource::Script(s) => Ok(s.clone()),
            LeaderSource::Live(l) => LeaderScript::new(vec![LeaderKeyframe {
                t: 0.0,
                wrist: l.wrist.into(),
                open_palm: l.open_palm,
                home: l.home,
                visible: l.visible,
            }]),
        }
    }
}

/// Latest tactile quantities of the left pad.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TactileState {
    pub deformation: DeformationVector,
    /// Mapped force, sensor frame.
    pub force_sensor: Vector3<f64>,
    pub force_base: Vector3<f64>,
    pub slip: bool,
    pub normal: f64,
}

struct Held {
    object: usize,
    object_in_ee: Isometry3<f64>,
}

/// Random streams of one trial.
struct Streams {
    skeleton: ChaCha8Rng,
    scene: ChaCha8Rng,
}

fn stream(seed: u64, trial: usize, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((trial as u64) << 8 | k);
    r
}

/// Trains the force mapper on synthetic calibration data drawn from `seed`.
pub fn train_mapper(scenario: &Scenario, seed: u64) -> Result<(ForceMapper, TrainReport)> {
    let model = scenario.tactile.calibration(&scenario.contact.model());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let train = model.generate(scenario.tactile.train_samples, &mut rng)?;
    let test = model.generate(scenario.tactile.test_samples, &mut rng)?;
    ForceMapper::train(&train, &test, &scenario.tactile.train_config(seed))
}

/// Per-trial copy of the scene with objects shifted by the jitter.
pub fn trial_objects(scenario: &Scenario, seed: u64, trial: usize) -> Vec<ObjectSpec> {
    let mut rng = stream(seed, trial, 0);
    scenario
        .objects
        .iter()
        .map(|o| {
            let mut o = o.clone();
            if scenario.object_jitter > 0.0 {
                let j = scenario.object_jitter;
                o.position[0] += rng.random_range(-j..=j);
                o.position[1] += rng.random_range(-j..=j);
            }
            o
        })
        .collect()
}

/// Per-trial leader script with the working keyframes shifted by one common
/// offset.
pub fn trial_script(scenario: &Scenario, seed: u64, trial: usize) -> Result<LeaderScript> {
    let mut rng = stream(seed, trial, 1);
    let mut keys = scenario.leader.clone();
    if scenario.leader_jitter > 0.0 {
        let j = scenario.leader_jitter;
        let dx = rng.random_range(-j..=j);
        let dy = rng.random_range(-j..=j);
        for k in keys.iter_mut().filter(|k| !k.home) {
            k.wrist[0] += dx;
            k.wrist[1] += dy;
        }
    }
    LeaderScript::new(keys)
}

/// Everything produced by one control tick.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub record: Record,
    pub transition: Option<Transition>,
}

/// One trial's worth of simulated world, robot and controller.
pub struct Simulator {
    scenario: Scenario,
    chain: KinematicChain,
    mapper: ForceMapper,
    leader: LeaderSource,
    script: LeaderScript,
    seed: u64,
    trial: usize,
    tick: u64,
    q: DVector<f64>,
    jaws: [f64; 2],
    logged_jaws: [f64; 2],
    fsm: Fsm,
    filter: ActiveArmFilter,
    objects: Vec<ObjectSpec>,
    held: Option<Held>,
    streams: Streams,
    clock: TactileClock,
    tactile: TactileState,
    detections: Vec<ObjectDetection>,
    manipulate_since: Option<f64>,
    fault_active: bool,
    tracking: CameraExtrinsics,
}

impl Simulator {
    pub fn new(
        scenario: &Scenario,
        chain: KinematicChain,
        mapper: ForceMapper,
        leader: LeaderSource,
        objects: Vec<ObjectSpec>,
        seed: u64,
        trial: usize,
    ) -> Result<Self> {
        let q = chain.home().clone();
        let home = chain.forward_kinematics(&q)?;
        let fsm = Fsm::new(scenario.fsm.clone(), scenario.friction, home)?;
        let filter = ActiveArmFilter::new(scenario.body.side, scenario.filter.window, scenario.filter.horizon)?;
        let script = leader.script()?;
        Ok(Self {
            tracking: scenario.tracking_camera.extrinsics()?,
            scenario: scenario.clone(),
            chain,
            mapper,
            leader,
            script,
            seed,
            trial,
            tick: 0,
            q,
            jaws: [JAW_MAX; JAW_COUNT],
            logged_jaws: [f64::NAN; JAW_COUNT],
            fsm,
            filter,
            objects,
            held: None,
            streams: Streams {
                skeleton: stream(seed, trial, 2),
                scene: stream(seed, trial, 3),
            },
            clock: TactileClock {
                nominal_hz: crate::tactile::NOMINAL_HZ,
                control_hz: scenario.rates.control_hz as u64,
            },
            tactile: TactileState::default(),
            detections: Vec::new(),
            manipulate_since: None,
            fault_active: false,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.rates.dt()
    }

    pub fn trial(&self) -> usize {
        self.trial
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn phase(&self) -> Phase {
        self.fsm.phase()
    }

    pub fn fsm(&self) -> &Fsm {
        &self.fsm
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn jaws(&self) -> [f64; 2] {
        self.jaws
    }

    pub fn ee(&self) -> Result<Pose> {
        self.chain.forward_kinematics(&self.q)
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn tactile(&self) -> &TactileState {
        &self.tactile
    }

    /// Detections of the most recent detection frame.
    pub fn detections(&self) -> &[ObjectDetection] {
        &self.detections
    }

    pub fn leader(&self) -> &LeaderSource {
        &self.leader
    }

    /// Replaces the live leader state; ignored for scripted leaders.
    pub fn set_live_leader(&mut self, live: LiveLeader) -> Result<()> {
        if let LeaderSource::Live(l) = &mut self.leader {
            *l = live;
            self.script = self.leader.script()?;
        }
        Ok(())
    }

    pub fn add_object(&mut self, o: ObjectSpec) -> Result<()> {
        o.validate()?;
        self.objects.push(o);
        Ok(())
    }

    /// The end effector has reached the current setpoint.
    pub fn settled(&self, ee: &Pose) -> bool {
        (ee.position - self.fsm.setpoint().position).norm() < self.scenario.fsm.settle_tolerance
    }

    fn track(&mut self, t: f64) -> TrackingUpdate {
        let frame = synth_skeleton(
            &self.script,
            &self.scenario.body,
            &self.scenario.tracking_camera.intrinsics,
            &self.tracking,
            &self.scenario.occluders,
            if matches!(self.leader, LeaderSource::Live(_)) { 0.0 } else { t },
            &mut self.streams.skeleton,
        );
        let est = self.filter.update(&frame);
        match est {
            Ok(e) if e.fresh => TrackingUpdate {
                stamp: t,
                wrist: Some(e.wrist),
                spread: e.spread,
                gestures: frame.gestures,
            },
            Ok(_) | Err(_) => TrackingUpdate {
                stamp: t,
                wrist: None,
                spread: f64::INFINITY,
                gestures: frame.gestures,
            },
        }
    }

    fn detect(&mut self, t: f64, ee: &Pose) -> Result<Vec<ObjectDetection>> {
        let cam = ee.to_isometry() * self.scenario.detection_camera.camera_to_ee();
        let cloud = render_scene(
            &self.objects,
            &self.scenario.scene,
            &self.scenario.detection_camera.intrinsics,
            &cam,
            t,
            &mut self.streams.scene,
        )?;
        detect_objects(&cloud, &self.scenario.detection, self.seed ^ self.tick, &cam)
    }

    /// Object between the jaws, if any: the tool point lies within its
    /// footprint and its height range widened by the reach margin.
    fn object_between_jaws(&self, ee: &Pose) -> Option<usize> {
        let m = self.scenario.contact.reach_margin;
        self.objects.iter().position(|o| {
            let local = o.pose().inverse_transform_point(&ee.position.into()).coords;
            let h = Vector3::from(o.dims) / 2.0;
            let inside_xy = match o.shape {
                ObjectShape::Box => local.x.abs() <= h.x && local.y.abs() <= h.y,
                ObjectShape::Cylinder => local.x.hypot(local.y) <= h.x,
            };
            inside_xy && local.z.abs() <= h.z + m
        })
    }

    fn sense(&mut self, ee: &Pose) -> Result<TactileReading> {
        let gripper_y = ee.orientation() * Vector3::y();
        let contact = self.scenario.contact.model();
        let (object, normal) = match self.held.as_ref().map(|h| h.object).or_else(|| self.object_between_jaws(ee)) {
            Some(i) => {
                let w = self.objects[i].width_along(&gripper_y);
                (Some(i), contact.normal_force(w, self.jaws[0], self.jaws[1]))
            }
            None => (None, 0.0),
        };
        let mut shear = 0.0;
        if object.is_some() && normal > 0.0 {
            if normal >= self.scenario.friction.contact_threshold {
                shear += self.scenario.contact.object_mass * 9.81 / 2.0;
            }
            if self.fault_active {
                shear += self.scenario.faults.iter().map(|f| f.shear).sum::<f64>();
            }
        }
        let stamp = self.clock.sample_time(self.clock.sample_index(self.tick));
        let frame = synth_frame(&contact, normal, [shear, 0.0], stamp, SensorId::LeftJaw);
        let (_, d) = interpolate_taxels(&frame);
        let (force, verdict) = if d.as_vector() == Vector3::zeros() {
            (Vector3::zeros(), Verdict::Stable)
        } else {
            (self.mapper.map(&d), check_friction_cone(&d, &self.scenario.friction)?)
        };
        self.tactile = TactileState {
            deformation: d,
            force_sensor: force,
            force_base: force_to_base(
                &force,
                &Isometry3::from_parts(
                    Translation3::identity(),
                    nalgebra::UnitQuaternion::from_matrix(&crate::stack::pad_to_gripper()),
                ),
                &ee.to_isometry(),
            ),
            slip: verdict == Verdict::Slip,
            normal,
        };
        Ok(TactileReading {
            deformation: d,
            force,
            verdict,
        })
    }

    fn update_fault(&mut self, t: f64, events: &mut Vec<String>) {
        let Some(since) = self.manipulate_since else { return };
        let active = self.scenario.faults.iter().any(|f| match f.kind {
            FaultKind::Slip => t >= since + f.delay && t < since + f.delay + f.duration,
        });
        if active != self.fault_active {
            events.push(if active { "fault=slip_start" } else { "fault=slip_end" }.into());
            self.fault_active = active;
        }
    }

    fn update_held(&mut self, ee_before: &Pose, ee_after: &Pose) {
        let gripping = self.tactile.normal >= self.scenario.friction.contact_threshold;
        match (&self.held, gripping) {
            (None, true) => {
                if let Some(i) = self.object_between_jaws(ee_before) {
                    let rel = ee_before.to_isometry().inverse() * self.objects[i].pose();
                    self.held = Some(Held {
                        object: i,
                        object_in_ee: rel,
                    });
                }
            }
            (Some(h), false) => {
                let o = &mut self.objects[h.object];
                o.position[2] = self.scenario.scene.table_z + o.dims[2] / 2.0;
                self.held = None;
            }
            _ => {}
        }
        if let Some(h) = &self.held {
            let p = ee_after.to_isometry() * h.object_in_ee;
            let o = &mut self.objects[h.object];
            o.position = p.translation.vector.into();
            let r = p.rotation;
            o.orientation = [r.w, r.i, r.j, r.k];
        }
    }

    /// Advances one control tick: perception, FSM, stack, solve, integrate.
    /// The returned record holds the state at the start of the tick.
    pub fn step(&mut self) -> Result<TickOutput> {
        let t = self.time();
        let ee = self.ee()?;
        let mut events = Vec::new();
        if self.tick == 0 {
            events.push(format!("enter={}", Phase::Homing));
            events.push("stack=cartesian".into());
        }

        let rates = self.scenario.rates.clone();
        let tracking = (self.tick % rates.tracking_period() == 0).then(|| self.track(t));
        let detection_due = self.tick % rates.detection_period() == 0
            && self.fsm.phase() == Phase::PreGrasp
            && self.settled(&ee);
        let detections = if detection_due {
            let d = self.detect(t, &ee)?;
            events.push(format!("detections={}", d.len()));
            self.detections = d;
            Some(t)
        } else {
            None
        };
        self.update_fault(t, &mut events);
        let reading = self.sense(&ee)?;

        let mode_before = self.fsm.grasp_mode();
        let obs = Observation {
            t,
            tracking,
            detections: detections.map(|s| (s, self.detections.as_slice())),
            tactile: Some(reading),
            ee,
            jaws: self.jaws,
        };
        let transition = self.fsm.step(&obs);
        if let Some(tr) = &transition {
            events.push(format!("enter={}", tr.to));
            events.push(format!("trigger={}", tr.trigger.as_str()));
            events.push(format!("stack={}", if tr.to.force_primary() { "force" } else { "cartesian" }));
            if tr.to == Phase::Manipulate && self.manipulate_since.is_none() {
                self.manipulate_since = Some(t);
            }
        }
        if self.fsm.phase() == Phase::Grasp && self.fsm.grasp_mode() == GraspMode::Close && mode_before != GraspMode::Close {
            events.push("grasp=close".into());
        }

        let stack = self.fsm.build_stack(&self.chain, &self.scenario.solver, rates.dt())?;
        let state = StackState {
            chain: &self.chain,
            q: self.q.clone(),
            jaws: self.jaws,
            contact_force: self.tactile.force_sensor,
        };
        let sol = stack.solve(&state, Method::CascadedQp, &self.scenario.solver)?;

        if self.jaws.iter().zip(&self.logged_jaws).any(|(a, b)| !((a - b).abs() <= 1e-6)) {
            self.logged_jaws = self.jaws;
            events.push(jaw_token(self.jaws));
        }
        let wrist = self.fsm.wrist().map(|w| w.into()).unwrap_or([f64::NAN; 3]);
        let d = self.tactile.deformation;
        let record = Record {
            t,
            phase: self.fsm.phase(),
            q: std::array::from_fn(|i| self.q[i]),
            ee: ee.to_array(),
            wrist,
            force: self.tactile.force_base.into(),
            deformation: [d.x, d.y, d.z],
            slip: self.tactile.slip,
            jaws: self.logged_jaws,
            events,
        };

        let dof = self.chain.dof();
        let arm = integrate_step(&self.q, &sol.qdot.rows(0, dof).into_owned(), rates.dt(), &self.chain)?;
        let jaws = integrate_clamped(
            &DVector::from_row_slice(&self.jaws),
            &sol.qdot.rows(dof, JAW_COUNT).into_owned(),
            rates.dt(),
            &DVector::zeros(JAW_COUNT),
            &DVector::from_element(JAW_COUNT, JAW_MAX),
        )?;
        self.q = arm.q;
        self.jaws = [jaws.q[0], jaws.q[1]];
        let ee_after = self.ee()?;
        self.update_held(&ee, &ee_after);
        self.tick += 1;
        Ok(TickOutput { record, transition })
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub log: TrialLog,
    pub aborted: Option<String>,
    pub wall_seconds: f64,
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if matches!(c, ',' | ';' | '\n' | '\r') { ' ' } else { c }).collect()
}

/// Runs one scripted trial until the follower is back home after at least
/// one transition, the time limit, or a solver failure.
pub fn run_trial(
    scenario: &Scenario,
    chain: &KinematicChain,
    mapper: &ForceMapper,
    seed: u64,
    trial: usize,
) -> Result<TrialResult> {
    let started = Instant::now();
    let script = trial_script(scenario, seed, trial)?;
    let objects = trial_objects(scenario, seed, trial);
    let mut sim = Simulator::new(
        scenario,
        chain.clone(),
        mapper.clone(),
        LeaderSource::Script(script),
        objects,
        seed,
        trial,
    )?;
    let max_ticks = (scenario.duration * scenario.rates.control_hz as f64).round() as u64;
    let mut records = Vec::with_capacity(max_ticks as usize);
    let mut aborted = None;
    let mut completed = false;
    while sim.tick() < max_ticks {
        match sim.step() {
            Ok(out) => records.push(out.record),
            Err(e) => {
                warn!("trial {trial}: aborted at t={:.3}: {e}", sim.time());
                let msg = sanitize(&e.to_string());
                if let Some(last) = records.last_mut() {
                    last.events.push(format!("abort={msg}"));
                }
                aborted = Some(e.to_string());
                break;
            }
        }
        if sim.phase() == Phase::Homing && !sim.fsm().transitions().is_empty() && sim.settled(&sim.ee()?) {
            completed = true;
            break;
        }
    }
    let log = TrialLog {
        task: scenario.task.clone(),
        trial,
        records,
        transitions: sim.fsm().transitions().to_vec(),
        completed,
    };
    let path: Vec<&str> = log.phase_path().iter().map(|p| p.as_str()).collect();
    info!(
        "trial {trial}: {} after {:.3} s simulated, path {}",
        if completed { "completed" } else { "not completed" },
        sim.time(),
        path.join(">")
    );
    Ok(TrialResult {
        log,
        aborted,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperSummary {
    pub epochs: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub force_range: f64,
}

impl From<&TrainReport> for MapperSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            epochs: r.epochs,
            train_rmse: r.train_rmse,
            test_rmse: r.test_rmse,
            force_range: r.force_range,
        }
    }
}

/// All trials of one scenario run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub trials: Vec<TrialResult>,
    pub mapper: ForceMapper,
    pub mapper_report: MapperSummary,
}

impl SimulationRun {
    pub fn logs(&self) -> Vec<TrialLog> {
        self.trials.iter().map(|t| t.log.clone()).collect()
    }

    pub fn completed_logs(&self) -> Vec<TrialLog> {
        self.trials.iter().filter(|t| t.log.completed).map(|t| t.log.clone()).collect()
    }

    pub fn bounds(&self) -> Result<LogBounds> {
        let chain = self.scenario.load_chain()?;
        Ok(LogBounds {
            q_lower: chain.lower().iter().copied().collect(),
            q_upper: chain.upper().iter().copied().collect(),
            dt: self.scenario.rates.dt(),
        })
    }
}

pub fn run_simulation(scenario: &Scenario, seed: u64) -> Result<SimulationRun> {
    let chain = scenario.load_chain()?;
    let (mapper, report) = train_mapper(scenario, seed)?;
    debug!(
        "force mapper: test rmse {:.4} N over a {:.3} N range",
        report.test_rmse, report.force_range
    );
    let mut trials = Vec::with_capacity(scenario.trials);
    for trial in 0..scenario.trials {
        trials.push(run_trial(scenario, &chain, &mapper, seed, trial)?);
    }
    Ok(SimulationRun {
        scenario: scenario.clone(),
        seed,
        trials,
        mapper_report: MapperSummary::from(&report),
        mapper,
    })
}
