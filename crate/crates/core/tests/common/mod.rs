#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use isot_core::fsm::Phase;
use isot_core::harness::Scenario;
use isot_core::kinematics::KinematicChain;
use isot_core::metrics::{Record, TrialLog};

pub const SCENARIOS: [&str; 4] = [
    "assembly_task1",
    "disassembly_task2",
    "withdraw_no_object",
    "slip_recovery",
];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).expect("shipped scenario loads")
}

pub fn temp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("isot-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Uniform over the joint limits shrunk by `margin` on each side (as a
/// fraction of the range).
pub fn random_q<R: Rng>(rng: &mut R, chain: &KinematicChain, margin: f64) -> DVector<f64> {
    DVector::from_fn(chain.dof(), |i, _| {
        let (lo, hi) = (chain.lower()[i], chain.upper()[i]);
        let m = margin * (hi - lo);
        rng.random_range(lo + m..=hi - m)
    })
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Central difference of a scalar function.
pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, q: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(q.len(), |i, _| {
        let mut a = q.clone();
        let mut b = q.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Lawson-Hanson nonnegative least squares: `min |A y - b|, y >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut y = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-13 * (1.0 + a.amax() * b.amax());
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &y);
        let Some(j) = (0..n).filter(|j| !passive[*j] && w[*j] > tol).max_by(|p, q| w[*p].total_cmp(&w[*q])) else {
            break;
        };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|k| passive[*k]).collect();
            let sub = a.select_columns(&idx);
            let z_p = sub.svd(true, true).solve(b, 1e-14).expect("svd solve");
            if z_p.iter().all(|v| *v > 0.0) {
                for (k, i) in idx.iter().enumerate() {
                    y[*i] = z_p[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, i) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    alpha = alpha.min(y[*i] / (y[*i] - z_p[k]));
                }
            }
            for (k, i) in idx.iter().enumerate() {
                y[*i] += alpha * (z_p[k] - y[*i]);
                if y[*i] <= 1e-15 {
                    y[*i] = 0.0;
                    passive[*i] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    y
}

/// Independent first-order optimality check for
/// `min 0.5 x'Hx + c'x  s.t.  A x = A x0,  l <= x <= u`:
/// the distance from `-g` to the cone spanned by the equality rows (either
/// sign) and the outward normals of the active bounds. Zero exactly when
/// valid multipliers exist.
pub fn kkt_violation(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let n = x.len();
    let g = h * x + c;
    let tol = 1e-9;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for r in 0..a_eq.nrows() {
        let row = a_eq.row(r).transpose();
        cols.push(row.clone());
        cols.push(-row);
    }
    for i in 0..n {
        let e = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        let at_lo = (x[i] - lower[i]).abs() <= tol;
        let at_hi = (x[i] - upper[i]).abs() <= tol;
        // g - lambda_lo e + lambda_hi e = -A' nu
        if at_lo {
            cols.push(-e.clone());
        }
        if at_hi {
            cols.push(e);
        }
    }
    if cols.is_empty() {
        return g.norm();
    }
    let m = DMatrix::from_columns(&cols);
    let neg = -&g;
    let y = nnls(&m, &neg);
    (&m * y - neg).norm()
}

/// Hand-built trial on the straight segment `a -> b`, with known pauses
/// after each phase change and two regrips during Manipulate.
///
/// Record times are `0.0, 0.1, ..., 1.6`. Phase changes happen at 0.2,
/// 0.7, 0.9, 1.4 and 1.6; the follower first moves 0.3, 0.1, 0.2 and 0.1 s
/// after the first four and never after the last. Manipulate spans
/// 0.9..=1.3 and each regrip moves both jaws by `regrip` meters.
pub fn toy_trial(trial: usize, a: Vector3<f64>, b: Vector3<f64>, offset: Vector3<f64>, regrip: f64) -> TrialLog {
    use Phase::*;
    let plan: [(Phase, f64); 17] = [
        (Homing, 0.0),
        (Homing, 0.0),
        (PreGrasp, 0.0),
        (PreGrasp, 0.0),
        (PreGrasp, 0.0),
        (PreGrasp, 0.2),
        (PreGrasp, 0.4),
        (Grasp, 0.4),
        (Grasp, 0.5),
        (Manipulate, 0.5),
        (Manipulate, 0.5),
        (Manipulate, 0.7),
        (Manipulate, 0.8),
        (Manipulate, 1.0),
        (Release, 1.0),
        (Release, 1.0),
        (Homing, 1.0),
    ];
    let g0 = 0.02;
    let records = plan
        .iter()
        .enumerate()
        .map(|(i, (phase, s))| {
            let p = a + (b - a) * *s + offset;
            let jaw = match i {
                12 => g0 - regrip,
                13 => g0 - 2.0 * regrip,
                14 => g0 - 2.0 * regrip,
                15 | 16 => 0.04,
                _ => g0,
            };
            Record {
                t: i as f64 * 0.1,
                phase: *phase,
                q: [0.0; 7],
                ee: [p.x, p.y, p.z, 0.0, 1.0, 0.0, 0.0],
                wrist: [f64::NAN; 3],
                force: [0.0; 3],
                deformation: [0.0; 3],
                slip: false,
                jaws: [jaw, jaw],
                events: Vec::new(),
            }
        })
        .collect();
    TrialLog {
        task: "toy".into(),
        trial,
        records,
        transitions: Vec::new(),
        completed: true,
    }
}

/// Segment endpoints used with [`toy_trial`]: a 1 m path along `y`.
pub fn toy_segment() -> (Vector3<f64>, Vector3<f64>) {
    (Vector3::new(0.4, -0.5, 0.3), Vector3::new(0.4, 0.5, 0.3))
}
