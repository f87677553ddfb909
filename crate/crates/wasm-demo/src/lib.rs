//! Three operations from `isot-core` for the browser page in `www/`:
//! reaching a tool-down target with the task stack, detecting objects in a
//! rendered tabletop cloud, and the friction-cone test on a deformation
//! vector. Each takes plain numbers or JSON and returns a JSON string.

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use isot_core::fsm::tool_down;
use isot_core::kinematics::{cartesian_task_error, KinematicChain, Pose};
use isot_core::perception::{detect_objects, render_scene, CameraExtrinsics, CameraIntrinsics, DetectionConfig, ObjectSpec, SceneConfig};
use isot_core::stack::{integrate_clamped, Method, Priority, SolverConfig, StackState, TaskKind, TaskSpec, TaskStack, JAW_MAX};
use isot_core::tactile::{check_friction_cone, friction_ratio, DeformationVector, FrictionConvention, FrictionParams, Verdict};

/// Controller period used by [`reach`], seconds.
pub const REACH_DT: f64 = 0.01;
pub const REACH_MAX_STEPS: usize = 800;
/// Cartesian error norm at which [`reach`] stops.
pub const REACH_TOL: f64 = 1e-4;

#[derive(Debug, Serialize)]
pub struct ReachResult {
    pub q: Vec<f64>,
    /// Base then every joint frame origin, for drawing the arm.
    pub joints: Vec<[f64; 3]>,
    /// End-effector position every tenth step.
    pub path: Vec<[f64; 3]>,
    pub error: f64,
    pub steps: usize,
    pub converged: bool,
}

fn xyz(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn reach_target(x: f64, y: f64, z: f64, yaw: f64) -> isot_core::Result<ReachResult> {
    let chain = KinematicChain::default();
    let cfg = SolverConfig::default();
    let target = Pose::new(Vector3::new(x, y, z), tool_down(yaw));
    let tasks = vec![
        TaskSpec::new("cartesian", TaskKind::Cartesian { target }, Priority::Hard(0)).with_gain(cfg.gains.cartesian),
        TaskSpec::new("limits", TaskKind::JointLimit, Priority::Soft).with_weight(cfg.alphas.joint_limit),
    ];
    let (lo, hi) = cfg.velocity_bounds(chain.dof());
    let stack = TaskStack::new(tasks, lo, hi, REACH_DT)?;
    let n = chain.dof();
    let mut pos_lo = chain.lower().clone().resize_vertically(n + 2, 0.0);
    let mut pos_hi = chain.upper().clone().resize_vertically(n + 2, JAW_MAX);
    pos_lo[n] = 0.0;
    pos_lo[n + 1] = 0.0;
    pos_hi[n] = JAW_MAX;
    pos_hi[n + 1] = JAW_MAX;

    let mut q = chain.home().clone();
    let mut path = Vec::new();
    let mut steps = 0;
    let mut error = f64::INFINITY;
    while steps < REACH_MAX_STEPS {
        let ee = chain.forward_kinematics(&q)?;
        error = cartesian_task_error(&ee, &target).norm();
        if steps % 10 == 0 {
            path.push(xyz(&ee.position));
        }
        if error < REACH_TOL {
            break;
        }
        let state = StackState {
            chain: &chain,
            q: q.clone(),
            jaws: [JAW_MAX; 2],
            contact_force: Vector3::zeros(),
        };
        let sol = stack.solve(&state, Method::CascadedQp, &cfg)?;
        let full = DVector::from_iterator(n + 2, q.iter().copied().chain([JAW_MAX, JAW_MAX]));
        let next = integrate_clamped(&full, &sol.qdot, REACH_DT, &pos_lo, &pos_hi)?;
        q = next.q.rows(0, n).into_owned();
        steps += 1;
    }
    let ee = chain.forward_kinematics(&q)?;
    path.push(xyz(&ee.position));
    Ok(ReachResult {
        joints: chain.joint_positions(&q)?.iter().map(xyz).collect(),
        q: q.iter().copied().collect(),
        path,
        error,
        steps,
        converged: error < REACH_TOL,
    })
}

#[derive(Debug, Serialize)]
pub struct ClusterDetection {
    pub label: &'static str,
    pub position: [f64; 3],
    pub dims: [f64; 3],
    pub points: usize,
}

#[derive(Debug, Serialize)]
pub struct ClusterResult {
    /// Rendered cloud in the base frame, for display.
    pub cloud: Vec<[f64; 3]>,
    pub detections: Vec<ClusterDetection>,
}

/// Overhead camera used by [`cluster_scene`].
pub const CAMERA_EYE: [f64; 3] = [0.45, 0.0, 0.7];
pub const CAMERA_TARGET: [f64; 3] = [0.45, 0.0, 0.0];

pub fn cluster_scene(objects: &[ObjectSpec], seed: u64) -> isot_core::Result<ClusterResult> {
    for o in objects {
        o.validate()?;
    }
    let cam = CameraExtrinsics::look_at(Vector3::from(CAMERA_EYE), Vector3::from(CAMERA_TARGET))?.to_isometry();
    let scene = SceneConfig {
        stride: 4,
        ..SceneConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = render_scene(objects, &scene, &CameraIntrinsics::default(), &cam, 0.0, &mut rng)?;
    let found = detect_objects(&cloud, &DetectionConfig::default(), seed, &cam)?;
    Ok(ClusterResult {
        cloud: cloud.points.iter().map(|p| xyz(&(cam * nalgebra::Point3::from(*p)).coords)).collect(),
        detections: found
            .iter()
            .map(|d| ClusterDetection {
                label: d.label.as_str(),
                position: xyz(&d.pose_base.position),
                dims: d.dims,
                points: d.point_count,
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct FrictionResult {
    pub ratio: f64,
    pub slip: bool,
}

pub fn friction_check(d: [f64; 3], mu: f64, standard: bool) -> isot_core::Result<FrictionResult> {
    let params = FrictionParams {
        mu,
        convention: if standard {
            FrictionConvention::Standard
        } else {
            FrictionConvention::AsWritten
        },
        ..FrictionParams::default()
    };
    params.validate()?;
    let dv = DeformationVector::new(d[0], d[1], d[2]);
    let verdict = check_friction_cone(&dv, &params)?;
    Ok(FrictionResult {
        ratio: friction_ratio(&dv, params.convention),
        slip: verdict == Verdict::Slip,
    })
}

fn to_js<T: Serialize>(r: isot_core::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Joint solution and end-effector path for a tool-down target.
#[wasm_bindgen]
pub fn reach(x: f64, y: f64, z: f64, yaw: f64) -> Result<String, JsError> {
    to_js(reach_target(x, y, z, yaw))
}

/// `objects_json` is an array of `{shape, dims, position, orientation?}`.
#[wasm_bindgen]
pub fn cluster(objects_json: &str, seed: u32) -> Result<String, JsError> {
    let objects: Vec<ObjectSpec> = serde_json::from_str(objects_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(cluster_scene(&objects, seed as u64))
}

#[wasm_bindgen]
pub fn friction(dx: f64, dy: f64, dz: f64, mu: f64, standard: bool) -> Result<String, JsError> {
    to_js(friction_check([dx, dy, dz], mu, standard))
}
