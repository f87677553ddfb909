//! 3-5-3 feedforward network mapping deformation (mm) to contact force (N).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DeformationVector;
use crate::error::{Error, Result};

pub const HIDDEN: usize = 5;
pub const MAPPER_SCHEMA: &str = "mapper.v1";

type Hidden = SVector<f64, HIDDEN>;
type W1 = SMatrix<f64, HIDDEN, 3>;
type W2 = SMatrix<f64, 3, HIDDEN>;

/// One calibration pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub deformation: Vector3<f64>,
    pub force: Vector3<f64>,
}

/// Affine map `x -> (x - offset) * scale` applied per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub offset: Vector3<f64>,
    pub scale: Vector3<f64>,
}

impl Normalization {
    /// Maps the per-axis `[min, max]` of `values` onto `[-1, 1]`.
    fn fit<'a>(values: impl Iterator<Item = &'a Vector3<f64>>) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in values {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let offset = (lo + hi) / 2.0;
        let scale = (hi - lo).map(|s| if s > 1e-12 { 2.0 / s } else { 1.0 });
        Self { offset, scale }
    }

    fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        (v - self.offset).component_mul(&self.scale)
    }

    fn invert(&self, v: &Vector3<f64>) -> Vector3<f64> {
        v.component_div(&self.scale) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Stop once the normalized training loss falls below this.
    pub loss_tolerance: f64,
    /// Accepted held-out RMSE as a fraction of the force range.
    pub rmse_bound: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 6000,
            learning_rate: 0.01,
            loss_tolerance: 1e-7,
            rmse_bound: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Largest per-axis span of the training forces.
    pub force_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceMapper {
    pub input: Normalization,
    pub output: Normalization,
    pub w1: W1,
    pub b1: Hidden,
    pub w2: W2,
    pub b2: Vector3<f64>,
}

#[derive(Clone, Copy)]
struct Grads {
    w1: W1,
    b1: Hidden,
    w2: W2,
    b2: Vector3<f64>,
}

impl Grads {
    fn zero() -> Self {
        Self {
            w1: W1::zeros(),
            b1: Hidden::zeros(),
            w2: W2::zeros(),
            b2: Vector3::zeros(),
        }
    }
}

struct Adam {
    m: Grads,
    v: Grads,
    t: i32,
}

fn adam_update<const R: usize, const C: usize>(
    p: &mut SMatrix<f64, R, C>,
    g: &SMatrix<f64, R, C>,
    m: &mut SMatrix<f64, R, C>,
    v: &mut SMatrix<f64, R, C>,
    lr: f64,
    t: i32,
) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    *m = *m * B1 + g * (1.0 - B1);
    *v = *v * B2 + g.component_mul(g) * (1.0 - B2);
    let c1 = 1.0 - B1.powi(t);
    let c2 = 1.0 - B2.powi(t);
    for k in 0..R * C {
        p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
    }
}

impl ForceMapper {
    fn hidden(&self, x: &Vector3<f64>) -> Hidden {
        (self.w1 * x + self.b1).map(f64::tanh)
    }

    /// Forward pass; `D` in mm, result in N in the sensor frame.
    pub fn map(&self, d: &DeformationVector) -> Vector3<f64> {
        let x = self.input.apply(&d.as_vector());
        let y = self.w2 * self.hidden(&x) + self.b2;
        self.output.invert(&y)
    }

    /// `df/dD` in N/mm.
    pub fn jacobian(&self, d: &DeformationVector) -> Matrix3<f64> {
        let x = self.input.apply(&d.as_vector());
        let h = self.hidden(&x);
        let dh = Hidden::from_fn(|i, _| 1.0 - h[i] * h[i]);
        let mut inner = self.w1;
        for i in 0..HIDDEN {
            inner.row_mut(i).scale_mut(dh[i]);
        }
        let dy = self.w2 * inner;
        Matrix3::from_diagonal(&self.output.scale.map(|s| 1.0 / s)) * dy * Matrix3::from_diagonal(&self.input.scale)
    }

    fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).chain(self.b2.iter()).all(|v| v.is_finite())
    }

    pub fn rmse(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = samples
            .iter()
            .map(|s| (self.map(&DeformationVector::from(s.deformation)) - s.force).norm_squared())
            .sum();
        (sum / (3 * samples.len()) as f64).sqrt()
    }

    /// Full-batch Adam on the mean squared error in normalized units.
    /// Fails when the held-out RMSE exceeds `rmse_bound` times the force range.
    pub fn train(train: &[Sample], test: &[Sample], cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidInput("training and test sets must be non-empty".into()));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if train.iter().chain(test).any(|s| !finite(&s.deformation) || !finite(&s.force)) {
            return Err(Error::InvalidInput("calibration samples must be finite".into()));
        }
        let input = Normalization::fit(train.iter().map(|s| &s.deformation));
        let output = Normalization::fit(train.iter().map(|s| &s.force));
        let xs: Vec<Vector3<f64>> = train.iter().map(|s| input.apply(&s.deformation)).collect();
        let ts: Vec<Vector3<f64>> = train.iter().map(|s| output.apply(&s.force)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let a1 = (6.0 / (3 + HIDDEN) as f64).sqrt();
        let a2 = (6.0 / (HIDDEN + 3) as f64).sqrt();
        let mut net = ForceMapper {
            input,
            output,
            w1: W1::from_fn(|_, _| rng.random_range(-a1..a1)),
            b1: Hidden::zeros(),
            w2: W2::from_fn(|_, _| rng.random_range(-a2..a2)),
            b2: Vector3::zeros(),
        };
        let mut adam = Adam {
            m: Grads::zero(),
            v: Grads::zero(),
            t: 0,
        };
        let n = xs.len() as f64;
        let mut epochs = 0;
        for _ in 0..cfg.epochs {
            let mut g = Grads::zero();
            let mut loss = 0.0;
            for (x, t) in xs.iter().zip(&ts) {
                let h = net.hidden(x);
                let r = net.w2 * h + net.b2 - t;
                loss += r.norm_squared();
                let gy = r * (2.0 / (3.0 * n));
                g.w2 += gy * h.transpose();
                g.b2 += gy;
                let gh = (net.w2.transpose() * gy).component_mul(&h.map(|v| 1.0 - v * v));
                g.w1 += gh * x.transpose();
                g.b1 += gh;
            }
            epochs += 1;
            if loss / (3.0 * n) < cfg.loss_tolerance {
                break;
            }
            adam.t += 1;
            let (lr, t) = (cfg.learning_rate, adam.t);
            adam_update(&mut net.w1, &g.w1, &mut adam.m.w1, &mut adam.v.w1, lr, t);
            adam_update(&mut net.b1, &g.b1, &mut adam.m.b1, &mut adam.v.b1, lr, t);
            adam_update(&mut net.w2, &g.w2, &mut adam.m.w2, &mut adam.v.w2, lr, t);
            adam_update(&mut net.b2, &g.b2, &mut adam.m.b2, &mut adam.v.b2, lr, t);
        }

        let force_range = 2.0 / output.scale.min();
        let report = TrainReport {
            epochs,
            train_rmse: net.rmse(train),
            test_rmse: net.rmse(test),
            force_range,
        };
        if !net.is_finite() {
            return Err(Error::TrainingFailed("weights diverged".into()));
        }
        if !(report.test_rmse <= cfg.rmse_bound * force_range) {
            return Err(Error::TrainingFailed(format!(
                "test RMSE {:.4} N exceeds {:.4} N after {} epochs (train RMSE {:.4} N)",
                report.test_rmse,
                cfg.rmse_bound * force_range,
                epochs,
                report.train_rmse
            )));
        }
        Ok((net, report))
    }

    /// Plain text: the schema line, then one line each for input offset,
    /// input scale, output offset, output scale, then 5 rows of `w1` (3
    /// values), `b1` (5), 3 rows of `w2` (5 values) and `b2` (3).
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let line = |s: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<String> = vals.map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "{}", v.join(" "));
        };
        let _ = writeln!(s, "{MAPPER_SCHEMA}");
        line(&mut s, &mut self.input.offset.iter().copied());
        line(&mut s, &mut self.input.scale.iter().copied());
        line(&mut s, &mut self.output.offset.iter().copied());
        line(&mut s, &mut self.output.scale.iter().copied());
        for r in self.w1.row_iter() {
            line(&mut s, &mut r.iter().copied());
        }
        line(&mut s, &mut self.b1.iter().copied());
        for r in self.w2.row_iter() {
            line(&mut s, &mut r.iter().copied());
        }
        line(&mut s, &mut self.b2.iter().copied());
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != MAPPER_SCHEMA {
            return Err(Error::InvalidInput(format!("expected {MAPPER_SCHEMA} header, got {:?}", header.trim())));
        }
        let mut row = |n: usize| -> Result<Vec<f64>> {
            let l = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::InvalidInput("truncated mapper file".into()))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("mapper file: {e}")))?;
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("mapper file: expected {n} finite values")));
            }
            Ok(v)
        };
        let v3 = |v: Vec<f64>| Vector3::from_column_slice(&v);
        let input = Normalization {
            offset: v3(row(3)?),
            scale: v3(row(3)?),
        };
        let output = Normalization {
            offset: v3(row(3)?),
            scale: v3(row(3)?),
        };
        let mut w1 = W1::zeros();
        for i in 0..HIDDEN {
            let r = row(3)?;
            for j in 0..3 {
                w1[(i, j)] = r[j];
            }
        }
        let b1 = Hidden::from_column_slice(&row(HIDDEN)?);
        let mut w2 = W2::zeros();
        for i in 0..3 {
            let r = row(HIDDEN)?;
            for j in 0..HIDDEN {
                w2[(i, j)] = r[j];
            }
        }
        let b2 = v3(row(3)?);
        if input.scale.iter().chain(output.scale.iter()).any(|s| *s == 0.0) {
            return Err(Error::InvalidInput("mapper file: zero normalization scale".into()));
        }
        Ok(Self {
            input,
            output,
            w1,
            b1,
            w2,
            b2,
        })
    }
}
