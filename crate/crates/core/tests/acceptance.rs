//! One PASS/FAIL line per acceptance criterion, each with its time budget.
//! Runs as a plain binary (`harness = false`) so the lines always print.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isot_core::fsm::{Phase, Trigger};
use isot_core::harness::{read_logs, run_simulation, write_run};
use isot_core::kinematics::{cartesian_rows, cartesian_task_error, KinematicChain, Pose};
use isot_core::metrics::{
    approach_adaptation, coordination_latency, cumulative_posture_deviation, grasp_correction, task_metrics,
    task_repeatability, MetricsReport, TrialLog,
};
use isot_core::perception::{
    base_to_camera, camera_to_base, camera_to_pixel, depth_to_camera, euclidean_cluster, CameraExtrinsics,
    CameraIntrinsics, PointCloud,
};
use isot_core::stack::{
    joint_limit_jacobian, joint_limit_value, manipulability_jacobian, manipulability_value, null_space_projector,
    solve_box_qp, solve_cascaded_qp, Method, Priority, Projection, QpProblem, SolverConfig, StackState, TaskKind,
    TaskSpec, TaskStack, TaskTerm, JAW_MAX,
};
use isot_core::tactile::{
    check_friction_cone, friction_ratio, DeformationVector, FrictionConvention, FrictionParams, ForceMapper, Verdict,
    HIDDEN,
};

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn null_space_suite() -> Outcome {
    let chain = KinematicChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_jn, mut worst_idem) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_q(&mut rng, &chain, 0.0);
        let j = cartesian_rows(&chain.geometric_jacobian(&q).map_err(e2s)?);
        let n = null_space_projector(&j);
        worst_jn = worst_jn.max((&j * &n).norm());
        worst_idem = worst_idem.max((&n * &n - &n).norm());
    }
    ensure(worst_jn < 1e-9 && worst_idem < 1e-9, || {
        format!("|JN|_F {worst_jn:.2e}, |N^2-N|_F {worst_idem:.2e}")
    })?;
    Ok(format!("max |JN|_F {worst_jn:.1e}, max |N^2-N|_F {worst_idem:.1e}"))
}

struct RandomState {
    q: DVector<f64>,
    jaws: [f64; 2],
    target: Pose,
}

fn random_states(n: usize, seed: u64) -> Vec<RandomState> {
    let chain = KinematicChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q = random_q(&mut rng, &chain, 0.15);
            let qt = random_q(&mut rng, &chain, 0.15);
            RandomState {
                q,
                jaws: [rng.random_range(0.005..0.035), rng.random_range(0.005..0.035)],
                target: chain.forward_kinematics(&qt).unwrap(),
            }
        })
        .collect()
}

fn stacks(target: Pose, cfg: &SolverConfig) -> (TaskStack, TaskStack) {
    let wide = DVector::from_element(9, 1e6);
    let primary = TaskSpec::new("cartesian", TaskKind::Cartesian { target }, Priority::Hard(0)).with_gain(cfg.gains.cartesian);
    let alone = TaskStack::new(vec![primary.clone()], -&wide, wide.clone(), 0.001).unwrap();
    let full = TaskStack::new(
        vec![
            primary,
            TaskSpec::new("manipulability", TaskKind::Manipulability { desired: 1.2 }, Priority::Soft)
                .with_gain(cfg.gains.manipulability)
                .with_weight(cfg.alphas.manipulability),
            TaskSpec::new("limits", TaskKind::JointLimit, Priority::Soft)
                .with_gain(cfg.gains.joint_limit)
                .with_weight(cfg.alphas.joint_limit),
        ],
        -&wide,
        wide,
        0.001,
    )
    .unwrap();
    (alone, full)
}

fn inactive(stack: &TaskStack, state: &StackState, qdot: &DVector<f64>) -> bool {
    let (lo, hi) = stack.effective_bounds(state).unwrap();
    (0..qdot.len()).all(|i| qdot[i] > lo[i] + 1e-9 && qdot[i] < hi[i] - 1e-9)
}

fn priority_preservation() -> Outcome {
    let chain = KinematicChain::default();
    let cfg = SolverConfig::default();
    let (mut worst_cf, mut worst_qp) = (0.0f64, 0.0f64);
    let mut compared = 0usize;
    for s in random_states(200, 21) {
        let state = StackState {
            chain: &chain,
            q: s.q.clone(),
            jaws: s.jaws,
            contact_force: Vector3::zeros(),
        };
        let (alone, full) = stacks(s.target, &cfg);
        let j0 = alone.linearize(&state).map_err(e2s)?[0].jacobian.clone();
        let cf = Method::ClosedForm(Projection::Successive);
        let a = alone.solve(&state, cf, &cfg).map_err(e2s)?.qdot;
        let b = full.solve(&state, cf, &cfg).map_err(e2s)?.qdot;
        worst_cf = worst_cf.max((&j0 * (&a - &b)).amax());
        let a = alone.solve(&state, Method::CascadedQp, &cfg).map_err(e2s)?.qdot;
        let b = full.solve(&state, Method::CascadedQp, &cfg).map_err(e2s)?.qdot;
        if inactive(&full, &state, &b) && inactive(&alone, &state, &a) {
            worst_qp = worst_qp.max((&j0 * (&a - &b)).amax());
            compared += 1;
        }
    }
    ensure(compared >= 190, || format!("bounds active on {} of 200 states", 200 - compared))?;
    ensure(worst_cf < 1e-9 && worst_qp < 1e-6, || {
        format!("closed form {worst_cf:.2e}, qp {worst_qp:.2e}")
    })?;
    Ok(format!("max |J0 dqdot| closed form {worst_cf:.1e}, qp {worst_qp:.1e} ({compared} bound-inactive states)"))
}

/// Level-by-level KKT check of a cascaded solve, reconstructing each level
/// from the linearized terms.
fn cascade_kkt(terms: &[TaskTerm], lo: &DVector<f64>, hi: &DVector<f64>, cfg: &SolverConfig) -> Result<f64, String> {
    let mut order: Vec<u32> = terms
        .iter()
        .filter_map(|t| match t.priority {
            Priority::Hard(l) => Some(l),
            Priority::Soft => None,
        })
        .collect();
    order.sort_unstable();
    order.dedup();
    let mut levels: Vec<Vec<&TaskTerm>> = order
        .iter()
        .map(|l| terms.iter().filter(|t| t.priority == Priority::Hard(*l)).collect())
        .collect();
    let soft: Vec<&TaskTerm> = terms.iter().filter(|t| t.priority == Priority::Soft).collect();
    if !soft.is_empty() {
        levels.push(soft);
    }
    let n = terms[0].cols();
    let mut prefix: Vec<TaskTerm> = Vec::new();
    let mut higher = DMatrix::<f64>::zeros(0, n);
    let mut x_prev = DVector::zeros(n).zip_zip_map(lo, hi, |v: f64, l, u| v.clamp(l, u));
    let mut worst = 0.0f64;
    for level in &levels {
        prefix.extend(level.iter().map(|t| (*t).clone()));
        let x = solve_cascaded_qp(&prefix, lo, hi, cfg).map_err(e2s)?.qdot;
        let rows: usize = level.iter().map(|t| t.rows()).sum();
        let mut j = DMatrix::zeros(rows, n);
        let mut r = DVector::zeros(rows);
        let mut at = 0;
        for t in level {
            j.rows_mut(at, t.rows()).copy_from(&(&t.jacobian * t.weight));
            r.rows_mut(at, t.rows()).copy_from(&(t.reference() * t.weight));
            at += t.rows();
        }
        let d = cfg.level_damping(level[0].priority);
        let h = j.transpose() * &j + DMatrix::identity(n, n) * (d * d);
        let c = -(j.transpose() * &r) - &x_prev * (d * d);
        worst = worst.max(kkt_violation(&h, &c, &higher, lo, hi, &x));
        let mut stacked = DMatrix::zeros(higher.nrows() + rows, n);
        stacked.rows_mut(0, higher.nrows()).copy_from(&higher);
        stacked.rows_mut(higher.nrows(), rows).copy_from(&j);
        higher = stacked;
        x_prev = x;
    }
    Ok(worst)
}

fn refine_2d(f: impl Fn(f64, f64) -> f64, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    let (mut a, mut b) = (lo, hi);
    let mut best = [0.0; 2];
    for _ in 0..8 {
        let k = 100;
        let mut fbest = f64::INFINITY;
        for i in 0..=k {
            for j in 0..=k {
                let x = a[0] + (b[0] - a[0]) * i as f64 / k as f64;
                let y = a[1] + (b[1] - a[1]) * j as f64 / k as f64;
                let v = f(x, y);
                if v < fbest {
                    fbest = v;
                    best = [x, y];
                }
            }
        }
        let w = [(b[0] - a[0]) * 2.0 / k as f64, (b[1] - a[1]) * 2.0 / k as f64];
        a = [(best[0] - w[0]).max(lo[0]), (best[1] - w[1]).max(lo[1])];
        b = [(best[0] + w[0]).min(hi[0]), (best[1] + w[1]).min(hi[1])];
    }
    best
}

fn refine_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut best = lo;
    for _ in 0..8 {
        let k = 1000;
        let mut fbest = f64::INFINITY;
        for i in 0..=k {
            let t = a + (b - a) * i as f64 / k as f64;
            let v = f(t);
            if v < fbest {
                fbest = v;
                best = t;
            }
        }
        let w = (b - a) * 2.0 / k as f64;
        a = (best - w).max(lo);
        b = (best + w).min(hi);
    }
    best
}

/// Two-level, two-variable cascade checked against grid search: the first
/// level over the box, then the second along the first level's solution
/// line clipped to the box.
fn grid_oracle(rng: &mut ChaCha8Rng, cfg: &SolverConfig) -> Result<f64, String> {
    let j1 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let j2 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let (r1, r2): (f64, f64) = (rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
    let terms = vec![
        TaskTerm::new("a", DMatrix::from_row_slice(1, 2, &j1), DVector::from_element(1, r1), Priority::Hard(0)),
        TaskTerm::new("b", DMatrix::from_row_slice(1, 2, &j2), DVector::from_element(1, r2), Priority::Hard(1)),
    ];
    let lo = DVector::from_element(2, -1.0);
    let hi = DVector::from_element(2, 1.0);
    let x = solve_cascaded_qp(&terms, &lo, &hi, cfg).map_err(e2s)?.qdot;

    let d2 = cfg.damping * cfg.damping;
    let f1 = |u: f64, v: f64| 0.5 * (j1[0] * u + j1[1] * v - r1).powi(2) + 0.5 * d2 * (u * u + v * v);
    let x1 = refine_2d(f1, [-1.0, -1.0], [1.0, 1.0]);
    let n1 = (j1[0] * j1[0] + j1[1] * j1[1]).sqrt();
    let dir = [-j1[1] / n1, j1[0] / n1];
    // t range keeping x1 + t dir inside the box
    let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        if dir[k].abs() > 1e-12 {
            let a = (-1.0 - x1[k]) / dir[k];
            let b = (1.0 - x1[k]) / dir[k];
            tmin = tmin.max(a.min(b));
            tmax = tmax.min(a.max(b));
        }
    }
    let f2 = |t: f64| {
        let (u, v) = (x1[0] + t * dir[0], x1[1] + t * dir[1]);
        0.5 * (j2[0] * u + j2[1] * v - r2).powi(2) + 0.5 * d2 * ((u - x1[0]).powi(2) + (v - x1[1]).powi(2))
    };
    let t = refine_1d(f2, tmin, tmax);
    let oracle = [x1[0] + t * dir[0], x1[1] + t * dir[1]];
    Ok((x[0] - oracle[0]).abs().max((x[1] - oracle[1]).abs()))
}

fn qp_correctness() -> Outcome {
    let chain = KinematicChain::default();
    let cfg = SolverConfig::default();
    let mut worst_match = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut solves = 0usize;
    let mut compared = 0usize;
    for s in random_states(200, 31) {
        let state = StackState {
            chain: &chain,
            q: s.q.clone(),
            jaws: s.jaws,
            contact_force: Vector3::zeros(),
        };
        let (_, full) = stacks(s.target, &cfg);
        let cf = full.solve(&state, Method::ClosedForm(Projection::Successive), &cfg).map_err(e2s)?.qdot;
        let qp = full.solve(&state, Method::CascadedQp, &cfg).map_err(e2s)?.qdot;
        if inactive(&full, &state, &qp) {
            worst_match = worst_match.max((&cf - &qp).amax());
            compared += 1;
        }
        let terms = full.linearize(&state).map_err(e2s)?;
        let (lo, hi) = full.effective_bounds(&state).map_err(e2s)?;
        worst_kkt = worst_kkt.max(cascade_kkt(&terms, &lo, &hi, &cfg)?);
        solves += 1;
    }
    // bound-active solves: the harness stack with its real speed limits
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for s in random_states(100, 33) {
        let state = StackState {
            chain: &chain,
            q: s.q.clone(),
            jaws: s.jaws,
            contact_force: Vector3::zeros(),
        };
        let (lo, hi) = cfg.velocity_bounds(chain.dof());
        let tasks = vec![
            TaskSpec::new("cartesian", TaskKind::Cartesian { target: s.target }, Priority::Hard(0)).with_gain(20.0),
            TaskSpec::new("jaws", TaskKind::JawPosition { target: [JAW_MAX; 2] }, Priority::Hard(1)).with_gain(cfg.gains.jaw),
            TaskSpec::new("limits", TaskKind::JointLimit, Priority::Soft).with_weight(cfg.alphas.joint_limit),
        ];
        let stack = TaskStack::new(tasks, lo, hi, 0.001).map_err(e2s)?;
        let terms = stack.linearize(&state).map_err(e2s)?;
        let (elo, ehi) = stack.effective_bounds(&state).map_err(e2s)?;
        worst_kkt = worst_kkt.max(cascade_kkt(&terms, &elo, &ehi, &cfg)?);
        solves += 1;
    }
    // random convex QPs with equality rows and tight boxes
    for _ in 0..200 {
        let n = 6;
        let m = random_matrix(&mut rng, n, n);
        let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let c = random_vector(&mut rng, n) * 3.0;
        let rows = rng.random_range(0..3);
        let a = random_matrix(&mut rng, rows, n);
        let lo = DVector::from_element(n, -0.3);
        let hi = DVector::from_element(n, 0.3);
        let x0 = random_vector(&mut rng, n) * 0.3;
        let p = QpProblem {
            hessian: &h,
            linear: &c,
            a_eq: &a,
            lower: &lo,
            upper: &hi,
        };
        let out = solve_box_qp(&p, x0.clone(), 1e-12, 200).map_err(e2s)?;
        ensure((&a * (&out.x - &x0)).amax() < 1e-9, || "equality rows not kept".into())?;
        worst_kkt = worst_kkt.max(kkt_violation(&h, &c, &a, &lo, &hi, &out.x));
        solves += 1;
    }
    let mut worst_grid = 0.0f64;
    for _ in 0..40 {
        worst_grid = worst_grid.max(grid_oracle(&mut rng, &cfg)?);
    }
    ensure(compared >= 190, || format!("bounds active on {} of 200 states", 200 - compared))?;
    ensure(worst_match < 1e-6 && worst_kkt < 1e-8 && worst_grid < 1e-3, || {
        format!("qp vs closed form {worst_match:.2e}, kkt {worst_kkt:.2e}, grid {worst_grid:.2e}")
    })?;
    Ok(format!(
        "qp vs closed form {worst_match:.1e} on {compared} bound-inactive states, kkt {worst_kkt:.1e} over {solves} solves, grid {worst_grid:.1e}"
    ))
}

fn gradient_suite() -> Outcome {
    let chain = KinematicChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut wm, mut wl, mut wj) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let q = random_q(&mut rng, &chain, 0.02);
        let fd = central_gradient(manipulability_value, &q, 1e-5);
        wm = wm.max((manipulability_jacobian(&q).row(0).transpose() - fd).amax());
        let fd = central_gradient(|x| joint_limit_value(x, &chain).unwrap(), &q, 1e-5);
        wl = wl.max((joint_limit_jacobian(&q, &chain).map_err(e2s)?.row(0).transpose() - fd).amax());
        let jg = chain.geometric_jacobian(&q).map_err(e2s)?;
        for k in 0..3 {
            let fd = central_gradient(|x| chain.forward_kinematics(x).unwrap().position[k], &q, 1e-6);
            wj = wj.max((jg.row(k).transpose() - fd).amax());
        }
    }
    ensure(wm < 1e-8 && wl < 1e-8 && wj < 1e-6, || {
        format!("manipulability {wm:.2e}, joint limit {wl:.2e}, position block {wj:.2e}")
    })?;
    Ok(format!("manipulability {wm:.1e}, joint limit {wl:.1e}, position block {wj:.1e}"))
}

fn convergence() -> Outcome {
    let chain = KinematicChain::default();
    let cfg = SolverConfig::default();
    let dt = 0.001;
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut slowest = 0.0f64;
    let mut worst_e = 0.0f64;
    for k in 0..20 {
        let home = chain.home().clone();
        let qt = DVector::from_fn(7, |i, _| {
            (home[i] + rng.random_range(-0.5..0.5)).clamp(chain.lower()[i], chain.upper()[i])
        });
        let target = chain.forward_kinematics(&qt).map_err(e2s)?;
        let (lo, hi) = cfg.velocity_bounds(chain.dof());
        let stack = TaskStack::new(
            vec![
                TaskSpec::new("cartesian", TaskKind::Cartesian { target }, Priority::Hard(0)).with_gain(cfg.gains.cartesian),
                TaskSpec::new("jaws", TaskKind::JawPosition { target: [JAW_MAX; 2] }, Priority::Hard(1)).with_gain(cfg.gains.jaw),
                TaskSpec::new("manipulability", TaskKind::Manipulability { desired: 1.2 }, Priority::Soft)
                    .with_gain(cfg.gains.manipulability)
                    .with_weight(cfg.alphas.manipulability),
                TaskSpec::new("limits", TaskKind::JointLimit, Priority::Soft)
                    .with_gain(cfg.gains.joint_limit)
                    .with_weight(cfg.alphas.joint_limit),
            ],
            lo,
            hi,
            dt,
        )
        .map_err(e2s)?;
        let mut q = home;
        let mut jaws = [JAW_MAX; 2];
        let mut reached = None;
        for step in 0..=5000 {
            let ee = chain.forward_kinematics(&q).map_err(e2s)?;
            if (ee.position - target.position).norm() < 1e-3 {
                reached = Some(step as f64 * dt);
                worst_e = worst_e.max(cartesian_task_error(&ee, &target).norm());
                break;
            }
            let state = StackState {
                chain: &chain,
                q: q.clone(),
                jaws,
                contact_force: Vector3::zeros(),
            };
            let qdot = stack.solve(&state, Method::CascadedQp, &cfg).map_err(e2s)?.qdot;
            let next = &q + qdot.rows(0, 7) * dt;
            ensure(chain.within_limits(&next), || format!("target {k}: joint limit left at step {step}"))?;
            q = next;
            jaws = [jaws[0] + qdot[7] * dt, jaws[1] + qdot[8] * dt];
        }
        let t = reached.ok_or_else(|| format!("target {k} not reached within 5 s"))?;
        slowest = slowest.max(t);
    }
    Ok(format!("20 targets under 1 mm, slowest {slowest:.3} s simulated, five-row error there {worst_e:.1e}"))
}

fn union_find_clusters(points: &[Vector3<f64>], xi: f64, min_points: usize) -> Vec<Vec<usize>> {
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let n = p[i];
            p[i] = r;
            i = n;
        }
        r
    }
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= xi {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= min_points).collect();
    out.sort();
    out
}

fn clustering_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut total = 0usize;
    for k in 0..100 {
        let n = rng.random_range(1..=500);
        let centers: Vec<Vector3<f64>> = (0..rng.random_range(1..6))
            .map(|_| Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.0..0.2)))
            .collect();
        let spread = rng.random_range(0.01..0.08);
        let points: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                let c = centers[rng.random_range(0..centers.len())];
                c + Vector3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                )
            })
            .collect();
        let xi = rng.random_range(0.005..0.05);
        let min_points = rng.random_range(1..6);
        let mut got = euclidean_cluster(&PointCloud::new(points.clone(), 0.0), xi, min_points).map_err(e2s)?;
        got.sort();
        let want = union_find_clusters(&points, xi, min_points);
        ensure(got == want, || format!("cloud {k}: {} clusters vs {} from union-find", got.len(), want.len()))?;
        total += want.len();
    }
    Ok(format!("100 clouds, {total} clusters, all identical"))
}

fn projection_round_trip() -> Outcome {
    let intr = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let eye = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5));
        let target = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
        let extr = CameraExtrinsics::look_at(eye, target).map_err(e2s)?;
        let (ix, iy) = (rng.random_range(0.0..intr.width), rng.random_range(0.0..intr.height));
        let pd = rng.random_range(0.05..3.0);
        let p_cam = depth_to_camera(ix, iy, pd, &intr).map_err(e2s)?;
        let p_base = camera_to_base(&p_cam, &extr);
        let back = base_to_camera(&p_base, &extr);
        let px = camera_to_pixel(&back, &intr).map_err(e2s)?;
        worst = worst
            .max((back - p_cam).amax())
            .max((px[0] - ix).abs())
            .max((px[1] - iy).abs())
            .max((px[2] - pd).abs());
    }
    ensure(worst < 1e-9, || format!("round-trip error {worst:.2e}"))?;
    Ok(format!("10000 points, max error {worst:.1e}"))
}

fn tactile_mapping() -> Outcome {
    ensure(HIDDEN == 5, || format!("{HIDDEN} hidden units"))?;
    let s = scenario("assembly_task1");
    let model = s.tactile.calibration(&s.contact.model());
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let train = model.generate(100, &mut rng).map_err(e2s)?;
    let test = model.generate(20, &mut rng).map_err(e2s)?;
    let (mapper, _) = ForceMapper::train(&train, &test, &s.tactile.train_config(81)).map_err(e2s)?;
    let mut sq = 0.0;
    for smp in &test {
        let f = mapper.map(&DeformationVector::from(smp.deformation));
        sq += (f - smp.force).norm_squared();
    }
    let rmse = (sq / (3.0 * test.len() as f64)).sqrt();
    let range = (0..3)
        .map(|k| {
            let v = train.iter().map(|smp| smp.force[k]);
            v.clone().fold(f64::NEG_INFINITY, f64::max) - v.fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    ensure(rmse < 0.05 * range, || format!("rmse {rmse:.3} N over a {range:.3} N range"))?;

    let as_written = FrictionParams {
        mu: 0.75,
        convention: FrictionConvention::AsWritten,
        ..FrictionParams::default()
    };
    let standard = FrictionParams {
        convention: FrictionConvention::Standard,
        ..as_written
    };
    let d = DeformationVector::new;
    let cases = [
        (d(4.0, 0.0, 3.0), as_written, Verdict::Stable),
        (d(0.0, 0.0, 1.0), as_written, Verdict::Slip),
        (d(3.0, 4.0, 0.0), as_written, Verdict::Stable),
        (d(3.0, 4.0, 0.0), standard, Verdict::Slip),
    ];
    for (dv, p, want) in cases {
        let got = check_friction_cone(&dv, &p).map_err(e2s)?;
        ensure(got == want, || format!("{:?} under {:?}: {got:?}", dv.as_vector(), p.convention))?;
    }
    ensure((friction_ratio(&d(4.0, 0.0, 3.0), FrictionConvention::AsWritten) - 0.75).abs() < 1e-15, || {
        "boundary ratio".into()
    })?;
    ensure(friction_ratio(&d(0.0, 0.0, 1.0), FrictionConvention::AsWritten).is_infinite(), || "infinite ratio".into())?;
    ensure(check_friction_cone(&d(0.0, 0.0, 0.0), &as_written).is_err(), || "zero D accepted".into())?;
    Ok(format!("held-out rmse {rmse:.3} N = {:.2}% of {range:.2} N; 4 boundary verdicts", 100.0 * rmse / range))
}

fn path_of(log: &TrialLog) -> Vec<Phase> {
    log.phase_path()
}

fn end_to_end_fsm() -> Outcome {
    use Phase::*;
    let dir = temp_dir("acceptance-fsm");
    let mut summary = Vec::new();
    for name in SCENARIOS {
        let s = scenario(name);
        ensure(s.trials == 5, || format!("{name}: {} trials", s.trials))?;
        let run = run_simulation(&s, s.seed).map_err(e2s)?;
        write_run(&run, &dir).map_err(e2s)?;
        summary.push(name);
    }
    let logs = read_logs(&dir).map_err(e2s)?;
    let find = |task: &str| logs.iter().find(|(t, _, _)| t == task).map(|(_, l, _)| l.clone());
    let check_heights = |task: &str, log: &TrialLog| -> Result<(), String> {
        for tr in &log.transitions {
            let want = match (tr.to, tr.trigger) {
                (PreGrasp, Trigger::WristDetected) => 4.0 * tr.wrist_z.abs(),
                (Manipulate, Trigger::GraspStable) => 2.0 * tr.wrist_z.abs(),
                _ => continue,
            };
            ensure((tr.setpoint_z - want).abs() <= 1e-6, || {
                format!("{task} trial {}: {} setpoint z {} vs {}", log.trial, tr.to, tr.setpoint_z, want)
            })?;
        }
        Ok(())
    };
    let nominal = vec![Homing, PreGrasp, Grasp, Manipulate, Release, Homing];
    for task in ["task1", "task2"] {
        let trials = find(task).ok_or_else(|| format!("{task} missing"))?;
        ensure(trials.len() == 5, || format!("{task}: {} trials", trials.len()))?;
        for log in &trials {
            ensure(log.completed, || format!("{task} trial {} did not complete", log.trial))?;
            ensure(path_of(log) == nominal, || format!("{task} trial {}: path {:?}", log.trial, path_of(log)))?;
            let n_pre = log.transitions.iter().filter(|t| t.to == PreGrasp).count();
            let n_lift = log.transitions.iter().filter(|t| t.to == Manipulate).count();
            ensure(n_pre == 1 && n_lift == 1, || format!("{task} trial {}: transition records", log.trial))?;
            check_heights(task, log)?;
        }
    }
    let withdraw = find("withdraw").ok_or("withdraw missing")?;
    for log in &withdraw {
        ensure(log.completed && path_of(log) == vec![Homing, PreGrasp, Homing], || {
            format!("withdraw trial {}: path {:?}", log.trial, path_of(log))
        })?;
        ensure(log.transitions.last().map(|t| t.trigger) == Some(Trigger::Withdraw), || "withdraw trigger".into())?;
        check_heights("withdraw", log)?;
    }
    let slip = find("slip").ok_or("slip missing")?;
    let detour = vec![Homing, PreGrasp, Grasp, Manipulate, Grasp, Manipulate, Release, Homing];
    for log in &slip {
        ensure(log.completed && path_of(log) == detour, || {
            format!("slip trial {}: path {:?}", log.trial, path_of(log))
        })?;
        let back = log.transitions.iter().find(|t| t.from == Manipulate && t.to == Grasp);
        ensure(back.map(|t| t.trigger) == Some(Trigger::Slip), || "slip trigger".into())?;
        let fault = log.records.iter().any(|r| r.events.iter().any(|e| e == "fault=slip_start"));
        ensure(fault, || format!("slip trial {}: no fault event", log.trial))?;
        check_heights("slip", log)?;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} scenarios x 5 trials: nominal paths, withdraw and slip detours, setpoint heights", summary.len()))
}

fn toy_expectations() -> Result<(), String> {
    let (a, b) = toy_segment();
    let off = Vector3::new(0.0, 0.0, 0.01);
    let t1 = toy_trial(0, a, b, Vector3::zeros(), 0.25e-3);
    let t2 = toy_trial(1, a, b, off, 0.5e-3);
    let trials = vec![t1.clone(), t2.clone()];
    let diag = 2.0;
    let close = |got: f64, want: f64, what: &str| ensure((got - want).abs() < 1e-9, || format!("{what}: {got} vs {want}"));

    // hand values: home end is `a`, pre-grasp end is `a + 0.4 (b - a)`
    let deltas = |o: Vector3<f64>| {
        let h = a + o;
        let p = a + (b - a) * 0.4 + o;
        let dr = ((p.x * p.x + p.y * p.y + p.z * p.z).sqrt() - (h.x * h.x + h.y * h.y + h.z * h.z).sqrt()).abs();
        let dth = (p.y.atan2(p.x) - h.y.atan2(h.x)).abs();
        (dr, dth)
    };
    let (r1, th1) = deltas(Vector3::zeros());
    let (r2, th2) = deltas(off);
    let aa = approach_adaptation(&trials).map_err(e2s)?;
    close(aa.dr.mean, (r1 + r2) / 2.0, "dr mean")?;
    close(aa.dr.std, (r1 - r2).abs() / 2f64.sqrt(), "dr std")?;
    close(aa.dtheta.mean, (th1 + th2) / 2.0, "dtheta mean")?;
    close(aa.dtheta.std, (th1 - th2).abs() / 2f64.sqrt(), "dtheta std")?;
    close(coordination_latency(&t1), 0.3 + 0.1 + 0.2 + 0.1, "latency")?;
    close(grasp_correction(&t1).ok_or("no manipulate")?, 1.0, "grasp correction 1")?;
    close(grasp_correction(&t2).ok_or("no manipulate")?, 2.0, "grasp correction 2")?;
    close(cumulative_posture_deviation(&trials).map_err(e2s)?, 1.0, "posture deviation")?;
    close(task_repeatability(&trials, diag).map_err(e2s)?, 1.0 - 0.01 / diag, "repeatability")?;

    let same = vec![t1.clone(), t1.clone(), t1.clone()];
    close(task_repeatability(&same, diag).map_err(e2s)?, 1.0, "identical C")?;
    close(cumulative_posture_deviation(&same).map_err(e2s)?, 0.0, "identical deviation")?;

    let m = task_metrics("toy", &trials, diag).map_err(e2s)?;
    close(m.coordination_latency_s, 0.7, "report latency")?;
    close(m.grasp_correction_mm.ok_or("no correction")?, 1.5, "report correction")?;
    close(m.cumulative_posture_deviation_pct, 1.0, "report deviation")?;
    close(m.task_repeatability, 0.995, "report C")?;
    let report = MetricsReport::new(vec![m], diag).map_err(e2s)?;
    let table = report.to_table();
    for row in [
        "Approach adaptation",
        "Task coordination latency",
        "Grasp correction",
        "Cumulative posture deviation",
        "Task repeatability",
    ] {
        ensure(table.lines().filter(|l| l.contains(row)).count() == 1, || format!("row {row:?} missing"))?;
    }
    Ok(())
}

fn metrics_criterion() -> Outcome {
    toy_expectations()?;
    Ok("identical trials C = 1, deviation 0%; toy values match; five report rows".into())
}

fn determinism() -> Outcome {
    let mut bytes = 0usize;
    for name in SCENARIOS {
        let mut s = scenario(name);
        s.trials = 2;
        let csv = |seed: u64| -> Result<Vec<Vec<u8>>, String> {
            let run = run_simulation(&s, seed).map_err(e2s)?;
            let mut out = Vec::new();
            for t in &run.trials {
                let mut a = Vec::new();
                t.log.write_csv(&mut a).map_err(e2s)?;
                t.log.write_transitions(&mut a).map_err(e2s)?;
                out.push(a);
            }
            Ok(out)
        };
        let first = csv(s.seed)?;
        let second = csv(s.seed)?;
        ensure(first == second, || format!("{name}: logs differ between equal-seed runs"))?;
        bytes += first.iter().map(Vec::len).sum::<usize>();
        if name == "assembly_task1" {
            let other = csv(s.seed + 1)?;
            ensure(other != first, || "a different seed gave identical logs".into())?;
        }
    }
    Ok(format!("4 scenarios x 2 trials, {} MB compared byte for byte", bytes / 1_000_000))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 11] = [
        ("Null-space suite", null_space_suite, 5),
        ("Priority preservation", priority_preservation, 10),
        ("QP correctness", qp_correctness, 30),
        ("Gradient suite", gradient_suite, 10),
        ("Convergence", convergence, 60),
        ("Clustering oracle", clustering_oracle, 30),
        ("Projection round-trip", projection_round_trip, 5),
        ("Tactile mapping", tactile_mapping, 60),
        ("End-to-end FSM", end_to_end_fsm, 300),
        ("Metrics", metrics_criterion, 10),
        ("Determinism", determinism, 120),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let over = took > Duration::from_secs(budget);
        match outcome {
            Ok(detail) if !over => println!("PASS {name} ({:.2} s): {detail}", took.as_secs_f64()),
            Ok(detail) => {
                failed += 1;
                println!("FAIL {name} ({:.2} s, budget {budget} s): {detail}", took.as_secs_f64());
            }
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({:.2} s): {why}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
