//! Interactive session: the simulator driven by live leader commands, and
//! the JSON frames exchanged with a console.

use ::log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::sim::{train_mapper, LeaderSource, LiveLeader, Simulator};
use crate::error::Result;
use crate::fsm::Phase;
use crate::kinematics::{KinematicChain, Pose};
use crate::perception::{ObjectShape, ObjectSpec};
use crate::tactile::ForceMapper;

/// State frames per wall-clock second in serve mode.
pub const STATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureName {
    OpenPalm,
    Home,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    WristPose {
        xyz: [f64; 3],
    },
    Gesture {
        name: GestureName,
    },
    PlaceObject {
        shape: ObjectShape,
        dims: [f64; 3],
        /// Position then `[w, x, y, z]`.
        pose: [f64; 7],
    },
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    IncompatiblePhase,
    InvalidValue,
    /// The controller failed; the session was reset.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrameOut {
    #[serde(rename = "D")]
    pub d: [f64; 3],
    pub f: [f64; 3],
    pub slip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOut {
    pub label: String,
    pub position: [f64; 3],
    pub dims: [f64; 3],
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub phase: Phase,
    pub q: [f64; 7],
    pub ee_pose: [f64; 7],
    /// `null` until the wrist has been seen.
    pub wrist: Option<[f64; 3]>,
    pub tactile: TactileFrameOut,
    pub detections: Vec<DetectionOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    State(StateFrame),
    Error { code: ErrorCode, reason: String },
}

impl ServerFrame {
    pub fn error(code: ErrorCode, reason: impl Into<String>) -> Self {
        ServerFrame::Error {
            code,
            reason: reason.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server frames always serialize")
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One live session over a scenario's world; keyframes are replaced by
/// commands.
pub struct Session {
    scenario: Scenario,
    chain: KinematicChain,
    mapper: ForceMapper,
    seed: u64,
    sim: Simulator,
}

impl Session {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let chain = scenario.load_chain()?;
        let (mapper, _) = train_mapper(scenario, seed)?;
        let sim = Self::fresh(scenario, &chain, &mapper, seed)?;
        Ok(Self {
            scenario: scenario.clone(),
            chain,
            mapper,
            seed,
            sim,
        })
    }

    fn fresh(scenario: &Scenario, chain: &KinematicChain, mapper: &ForceMapper, seed: u64) -> Result<Simulator> {
        let start = scenario.leader.first().map(|k| k.wrist).unwrap_or([0.5, 0.5, 0.2]);
        let live = LiveLeader {
            wrist: Vector3::from(start),
            open_palm: false,
            home: true,
            visible: true,
        };
        Simulator::new(
            scenario,
            chain.clone(),
            mapper.clone(),
            LeaderSource::Live(live),
            scenario.objects.clone(),
            seed,
            0,
        )
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn phase(&self) -> Phase {
        self.sim.phase()
    }

    fn live(&self) -> LiveLeader {
        match self.sim.leader() {
            LeaderSource::Live(l) => *l,
            LeaderSource::Script(_) => unreachable!("sessions always use a live leader"),
        }
    }

    pub fn reset(&mut self) -> Result<()> {
        self.sim = Self::fresh(&self.scenario, &self.chain, &self.mapper, self.seed)?;
        Ok(())
    }

    /// Parses and applies one client message; returns the rejection, if any.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerFrame> {
        match serde_json::from_str::<ClientFrame>(text) {
            Ok(frame) => self.apply(frame).err(),
            Err(e) => Some(ServerFrame::error(ErrorCode::Malformed, e.to_string())),
        }
    }

    pub fn apply(&mut self, frame: ClientFrame) -> std::result::Result<(), ServerFrame> {
        let phase = self.sim.phase();
        let incompatible = |what: &str| ServerFrame::error(ErrorCode::IncompatiblePhase, format!("{what} not accepted during {phase}"));
        let invalid = |why: String| ServerFrame::error(ErrorCode::InvalidValue, why);
        let mut live = self.live();
        match frame {
            ClientFrame::WristPose { xyz } => {
                let p = Vector3::from(xyz);
                if !finite(&xyz) {
                    return Err(invalid("wrist position must be finite".into()));
                }
                if p.z <= self.scenario.fsm.floor_z {
                    return Err(invalid(format!("wrist height {} is at or below the floor", p.z)));
                }
                if !self.scenario.workspace.contains(&p) {
                    return Err(invalid("wrist outside the workspace".into()));
                }
                live.wrist = p;
                live.home = false;
                live.open_palm = false;
            }
            ClientFrame::Gesture { name: GestureName::OpenPalm } => {
                if phase != Phase::Manipulate {
                    return Err(incompatible("open_palm"));
                }
                live.open_palm = true;
            }
            ClientFrame::Gesture { name: GestureName::Home } => {
                if phase != Phase::Release {
                    return Err(incompatible("home"));
                }
                live.home = true;
                live.open_palm = false;
            }
            ClientFrame::PlaceObject { shape, dims, pose } => {
                if matches!(phase, Phase::Grasp | Phase::Manipulate) {
                    return Err(incompatible("place_object"));
                }
                if !finite(&dims) || !finite(&pose) {
                    return Err(invalid("object values must be finite".into()));
                }
                let o = ObjectSpec {
                    shape,
                    dims,
                    position: [pose[0], pose[1], pose[2]],
                    orientation: [pose[3], pose[4], pose[5], pose[6]],
                };
                if !self.scenario.workspace.contains(&Vector3::from(o.position)) {
                    return Err(invalid("object outside the workspace".into()));
                }
                return self.sim.add_object(o).map_err(|e| invalid(e.to_string()));
            }
            ClientFrame::Reset => {
                return self
                    .reset()
                    .map_err(|e| ServerFrame::error(ErrorCode::Internal, e.to_string()));
            }
        }
        self.sim
            .set_live_leader(live)
            .map_err(|e| ServerFrame::error(ErrorCode::Internal, e.to_string()))
    }

    /// Runs `ticks` control ticks. A controller failure resets the session
    /// and is reported as an error frame.
    pub fn advance(&mut self, ticks: u64) -> Option<ServerFrame> {
        for _ in 0..ticks {
            if let Err(e) = self.sim.step() {
                warn!("session reset after controller failure: {e}");
                let reason = e.to_string();
                return Some(match self.reset() {
                    Ok(()) => ServerFrame::error(ErrorCode::Internal, reason),
                    Err(e2) => ServerFrame::error(ErrorCode::Internal, format!("{reason}; reset failed: {e2}")),
                });
            }
        }
        None
    }

    pub fn state(&self) -> Result<StateFrame> {
        let sim = &self.sim;
        let ee = sim.ee().unwrap_or_else(|_| Pose::identity());
        let tac = sim.tactile();
        let d = tac.deformation;
        Ok(StateFrame {
            t: sim.time(),
            phase: sim.phase(),
            q: std::array::from_fn(|i| sim.q()[i]),
            ee_pose: ee.to_array(),
            wrist: sim.fsm().wrist().map(Into::into),
            tactile: TactileFrameOut {
                d: [d.x, d.y, d.z],
                f: tac.force_base.into(),
                slip: tac.slip,
            },
            detections: sim
                .detections()
                .iter()
                .map(|d| DetectionOut {
                    label: d.label.as_str().to_owned(),
                    position: d.pose_base.position.into(),
                    dims: d.dims,
                    points: d.point_count,
                })
                .collect(),
        })
    }

    pub fn state_frame(&self) -> Result<ServerFrame> {
        Ok(ServerFrame::State(self.state()?))
    }
}
