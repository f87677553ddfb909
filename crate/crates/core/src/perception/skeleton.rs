//! Synthetic 18-joint skeleton stream and active-arm filtering.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::{base_to_camera, camera_to_base, camera_to_pixel, depth_to_camera};
use super::camera::{CameraExtrinsics, CameraIntrinsics};
use crate::error::{Error, Result};

pub const JOINT_NAMES: [&str; 18] = [
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    #[default]
    Right,
}

impl Side {
    /// Indices of shoulder, elbow and wrist.
    pub fn arm_indices(self) -> [usize; 3] {
        match self {
            Side::Right => [2, 3, 4],
            Side::Left => [5, 6, 7],
        }
    }
}

/// One leader keyframe: wrist position in the robot base frame plus gesture
/// flags that hold until the next keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderKeyframe {
    pub t: f64,
    pub wrist: [f64; 3],
    #[serde(default)]
    pub open_palm: bool,
    #[serde(default)]
    pub home: bool,
    /// False while the leader is out of the tracking camera's view.
    #[serde(default = "yes")]
    pub visible: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample {
    pub wrist: Vector3<f64>,
    pub open_palm: bool,
    pub home: bool,
    pub visible: bool,
}

/// Piecewise-linear leader wrist path.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderScript {
    keyframes: Vec<LeaderKeyframe>,
}

impl LeaderScript {
    pub fn new(keyframes: Vec<LeaderKeyframe>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::InvalidInput("leader script needs keyframes".into()));
        }
        for w in keyframes.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "keyframe times must increase strictly ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        if keyframes.iter().any(|k| !k.t.is_finite() || k.wrist.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("non-finite keyframe".into()));
        }
        Ok(Self { keyframes })
    }

    pub fn keyframes(&self) -> &[LeaderKeyframe] {
        &self.keyframes
    }

    pub fn duration(&self) -> f64 {
        self.keyframes.last().map(|k| k.t).unwrap_or(0.0)
    }

    pub fn sample(&self, t: f64) -> LeaderSample {
        let ks = &self.keyframes;
        let i = ks.partition_point(|k| k.t <= t);
        let flags = &ks[i.saturating_sub(1)];
        let wrist = if i == 0 {
            Vector3::from(ks[0].wrist)
        } else if i == ks.len() {
            Vector3::from(ks[i - 1].wrist)
        } else {
            let (a, b) = (&ks[i - 1], &ks[i]);
            let s = (t - a.t) / (b.t - a.t);
            let wa = Vector3::from(a.wrist);
            let wb = Vector3::from(b.wrist);
            if s == 0.0 {
                wa
            } else {
                wa + (wb - wa) * s
            }
        };
        LeaderSample {
            wrist,
            open_palm: flags.open_palm,
            home: flags.home,
            visible: flags.visible,
        }
    }
}

/// Body geometry of the synthetic leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyConfig {
    /// Ground projection of the torso, base frame.
    pub root: [f64; 2],
    pub shoulder_height: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub side: Side,
    /// Half-width of uniform noise added to every joint, meters.
    pub noise: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            root: [0.62, 0.45],
            shoulder_height: 0.40,
            upper_arm: 0.30,
            forearm: 0.27,
            side: Side::Right,
            noise: 0.0,
        }
    }
}

/// Axis-aligned box that hides anything behind it from the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Occluder {
    /// Entry distance of the ray `origin + s dir` (`|dir| = 1`), if any.
    pub fn ray_entry(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() < 1e-15 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let a = (self.min[k] - origin[k]) / dir[k];
            let b = (self.max[k] - origin[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonJoint {
    /// `(Ix, Iy, pd)`
    pub pixel: [f64; 3],
    pub occluded: bool,
    /// Reconstructed base-frame position of a visible joint.
    pub position: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Gestures {
    pub open_palm: bool,
    pub home: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub timestamp: f64,
    pub joints: Vec<SkeletonJoint>,
    pub gestures: Gestures,
}

impl SkeletonFrame {
    pub fn joint(&self, name: &str) -> Option<&SkeletonJoint> {
        JOINT_NAMES.iter().position(|n| *n == name).map(|i| &self.joints[i])
    }
}

/// Elbow from a two-link fit between shoulder and wrist, bent toward `pole`.
fn elbow_position(
    shoulder: &Vector3<f64>,
    wrist: &Vector3<f64>,
    l1: f64,
    l2: f64,
    pole: &Vector3<f64>,
) -> Vector3<f64> {
    let span = wrist - shoulder;
    let d = span.norm();
    if d < 1e-9 {
        return shoulder + pole.normalize() * l1;
    }
    let u = span / d;
    let d = d.clamp((l1 - l2).abs() + 1e-9, l1 + l2 - 1e-9);
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let mut perp = pole - u * pole.dot(&u);
    if perp.norm() < 1e-9 {
        perp = u.cross(&Vector3::x());
    }
    shoulder + u * a + perp.normalize() * h
}

/// Base-frame positions of the 18 joints with the active wrist at `wrist`.
pub fn body_pose(body: &BodyConfig, wrist: &Vector3<f64>) -> [Vector3<f64>; 18] {
    let root = Vector3::new(body.root[0], body.root[1], 0.0);
    let up = Vector3::z();
    let facing = {
        let f = -Vector3::new(root.x, root.y, 0.0);
        if f.norm() < 1e-9 {
            Vector3::x()
        } else {
            f.normalize()
        }
    };
    // right-hand side of a person facing `facing`
    let right = facing.cross(&up);
    let neck = root + up * (body.shoulder_height + 0.05);
    let r_shoulder = root + up * body.shoulder_height + right * 0.18;
    let l_shoulder = root + up * body.shoulder_height - right * 0.18;
    let hang = |s: &Vector3<f64>| {
        let e = s - up * body.upper_arm;
        (e, e - up * body.forearm + facing * 0.05)
    };
    let (sign, active_shoulder) = match body.side {
        Side::Right => (1.0, r_shoulder),
        Side::Left => (-1.0, l_shoulder),
    };
    let pole = -up + right * (0.5 * sign);
    let active_elbow = elbow_position(&active_shoulder, wrist, body.upper_arm, body.forearm, &pole);
    let (passive_elbow, passive_wrist) = match body.side {
        Side::Right => hang(&l_shoulder),
        Side::Left => hang(&r_shoulder),
    };
    let (r_elbow, r_wrist, l_elbow, l_wrist) = match body.side {
        Side::Right => (active_elbow, *wrist, passive_elbow, passive_wrist),
        Side::Left => (passive_elbow, passive_wrist, active_elbow, *wrist),
    };
    let head = neck + up * 0.15 + facing * 0.05;
    let r_hip = root + right * 0.10;
    let l_hip = root - right * 0.10;
    let knee = |h: &Vector3<f64>| h + facing * 0.40;
    let ankle = |h: &Vector3<f64>| knee(h) - up * 0.45;
    [
        head,
        neck,
        r_shoulder,
        r_elbow,
        r_wrist,
        l_shoulder,
        l_elbow,
        l_wrist,
        r_hip,
        knee(&r_hip),
        ankle(&r_hip),
        l_hip,
        knee(&l_hip),
        ankle(&l_hip),
        head + up * 0.04 + right * 0.03,
        head + up * 0.04 - right * 0.03,
        head + up * 0.02 + right * 0.07 - facing * 0.04,
        head + up * 0.02 - right * 0.07 - facing * 0.04,
    ]
}

/// Projects the body into the tracking camera at time `t`.
pub fn synth_skeleton<R: Rng>(
    script: &LeaderScript,
    body: &BodyConfig,
    intr: &CameraIntrinsics,
    extr: &CameraExtrinsics,
    occluders: &[Occluder],
    t: f64,
    rng: &mut R,
) -> SkeletonFrame {
    let sample = script.sample(t);
    let positions = body_pose(body, &sample.wrist);
    let joints = positions
        .iter()
        .map(|p| {
            let mut p = *p;
            if body.noise > 0.0 {
                for k in 0..3 {
                    p[k] += rng.random_range(-body.noise..=body.noise);
                }
            }
            project_joint(&p, intr, extr, occluders, sample.visible)
        })
        .collect();
    SkeletonFrame {
        timestamp: t,
        joints,
        gestures: Gestures {
            open_palm: sample.open_palm,
            home: sample.home,
        },
    }
}

fn project_joint(
    p: &Vector3<f64>,
    intr: &CameraIntrinsics,
    extr: &CameraExtrinsics,
    occluders: &[Occluder],
    visible: bool,
) -> SkeletonJoint {
    let cam = base_to_camera(p, extr);
    let pixel = camera_to_pixel(&cam, intr).unwrap_or([intr.cx, intr.cy, cam.z]);
    let ray = p - extr.translation;
    let dist = ray.norm();
    let blocked = dist > 0.0
        && occluders
            .iter()
            .filter_map(|o| o.ray_entry(&extr.translation, &(ray / dist)))
            .any(|s| s < dist);
    let occluded = !visible || cam.z <= 0.0 || !intr.in_image(pixel[0], pixel[1]) || blocked;
    let position = if occluded {
        None
    } else {
        depth_to_camera(pixel[0], pixel[1], pixel[2], intr)
            .ok()
            .map(|c| camera_to_base(&c, extr))
    };
    SkeletonJoint {
        pixel,
        occluded,
        position,
    }
}

/// Smoothed active-arm estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmEstimate {
    pub wrist: Vector3<f64>,
    pub elbow: Option<Vector3<f64>>,
    pub shoulder: Option<Vector3<f64>>,
    /// The wrist was visible in the latest frame.
    pub fresh: bool,
    pub window_full: bool,
    /// Largest distance between any buffered wrist sample and the estimate.
    pub spread: f64,
    pub last_seen: f64,
}

/// Selects the active arm and smooths the wrist with a moving average;
/// an occluded wrist holds its last value up to `horizon` seconds.
#[derive(Debug, Clone)]
pub struct ActiveArmFilter {
    side: Side,
    window: usize,
    horizon: f64,
    samples: VecDeque<Vector3<f64>>,
    last_seen: Option<f64>,
    last: Option<ArmEstimate>,
}

impl ActiveArmFilter {
    pub fn new(side: Side, window: usize, horizon: f64) -> Result<Self> {
        if window == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidInput("filter window and horizon must be positive".into()));
        }
        Ok(Self {
            side,
            window,
            horizon,
            samples: VecDeque::with_capacity(window),
            last_seen: None,
            last: None,
        })
    }

    pub fn reset(&mut self) {
        self.samples.clear();
        self.last_seen = None;
        self.last = None;
    }

    pub fn update(&mut self, frame: &SkeletonFrame) -> Result<ArmEstimate> {
        let [s, e, w] = self.side.arm_indices();
        let wrist = frame.joints.get(w).and_then(|j| j.position);
        match wrist {
            Some(p) => {
                if self.samples.len() == self.window {
                    self.samples.pop_front();
                }
                self.samples.push_back(p);
                self.last_seen = Some(frame.timestamp);
                let mean = mean_exact(&self.samples);
                let spread = self
                    .samples
                    .iter()
                    .map(|v| (v - mean).norm())
                    .fold(0.0, f64::max);
                let est = ArmEstimate {
                    wrist: mean,
                    elbow: frame.joints[e].position,
                    shoulder: frame.joints[s].position,
                    fresh: true,
                    window_full: self.samples.len() == self.window,
                    spread,
                    last_seen: frame.timestamp,
                };
                self.last = Some(est.clone());
                Ok(est)
            }
            None => {
                let last_seen = self.last_seen.unwrap_or(f64::NEG_INFINITY);
                match &self.last {
                    Some(prev) if frame.timestamp - last_seen <= self.horizon => Ok(ArmEstimate {
                        fresh: false,
                        ..prev.clone()
                    }),
                    _ => {
                        self.samples.clear();
                        Err(Error::TrackingLost { last_seen })
                    }
                }
            }
        }
    }
}

/// Mean written as an offset from the first sample, so identical samples
/// average to themselves bit for bit.
fn mean_exact(samples: &VecDeque<Vector3<f64>>) -> Vector3<f64> {
    let first = samples[0];
    let mut acc = Vector3::zeros();
    for s in samples.iter() {
        acc += s - first;
    }
    first + acc / samples.len() as f64
}
