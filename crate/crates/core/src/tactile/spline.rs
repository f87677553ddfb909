//! Natural cubic splines on the unit-spaced 4x4 taxel grid.

/// Natural cubic spline through `y` at `x = 0, 1, 2, 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalSpline4 {
    y: [f64; 4],
    /// Second derivatives at the knots; zero at both ends.
    m: [f64; 4],
}

impl NaturalSpline4 {
    pub fn new(y: [f64; 4]) -> Self {
        // 4 M1 + M2 = r1, M1 + 4 M2 = r2
        let r1 = 6.0 * (y[2] - 2.0 * y[1] + y[0]);
        let r2 = 6.0 * (y[3] - 2.0 * y[2] + y[1]);
        let m1 = (4.0 * r1 - r2) / 15.0;
        let m2 = (4.0 * r2 - r1) / 15.0;
        Self { y, m: [0.0, m1, m2, 0.0] }
    }

    fn interval(x: f64) -> (usize, f64) {
        let i = (x.floor().max(0.0) as usize).min(2);
        (i, x - i as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = Self::interval(x);
        let s = 1.0 - t;
        s * self.y[i] + t * self.y[i + 1] + ((s * s * s - s) * self.m[i] + (t * t * t - t) * self.m[i + 1]) / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, t) = Self::interval(x);
        let s = 1.0 - t;
        self.y[i + 1] - self.y[i] + ((1.0 - 3.0 * s * s) * self.m[i] + (3.0 * t * t - 1.0) * self.m[i + 1]) / 6.0
    }

    /// Integral over `[0, 3]`.
    pub fn integral(&self) -> f64 {
        (0..3)
            .map(|i| (self.y[i] + self.y[i + 1]) / 2.0 - (self.m[i] + self.m[i + 1]) / 24.0)
            .sum()
    }
}

/// Tensor-product natural spline over taxel index coordinates; `z[row][col]`
/// with `u` along columns and `v` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BicubicSpline {
    rows: [NaturalSpline4; 4],
}

impl BicubicSpline {
    pub fn new(z: &[[f64; 4]; 4]) -> Self {
        Self {
            rows: z.map(NaturalSpline4::new),
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        NaturalSpline4::new(self.rows.map(|r| r.eval(u))).eval(v)
    }

    /// `(dz/du, dz/dv)`
    pub fn gradient(&self, u: f64, v: f64) -> (f64, f64) {
        let du = NaturalSpline4::new(self.rows.map(|r| r.derivative(u))).eval(v);
        let dv = NaturalSpline4::new(self.rows.map(|r| r.eval(u))).derivative(v);
        (du, dv)
    }

    /// Mean of the surface over `[0, 3]^2`.
    pub fn mean(&self) -> f64 {
        NaturalSpline4::new(self.rows.map(|r| r.integral())).integral() / 9.0
    }

    /// Mean of `(dz/du, dz/dv)` over `[0, 3]^2`.
    pub fn mean_gradient(&self) -> (f64, f64) {
        // the u-derivative integrates to the difference of the edge columns
        let edge = |u: f64| NaturalSpline4::new(self.rows.map(|r| r.eval(u))).integral();
        let du = (edge(3.0) - edge(0.0)) / 9.0;
        let row_integrals = NaturalSpline4::new(self.rows.map(|r| r.integral()));
        let dv = (row_integrals.eval(3.0) - row_integrals.eval(0.0)) / 9.0;
        (du, dv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubic_free_data() {
        let s = NaturalSpline4::new([1.0, 3.0, 5.0, 7.0]);
        assert!((s.eval(1.5) - 4.0).abs() < 1e-14);
        assert!((s.derivative(2.7) - 2.0).abs() < 1e-14);
        assert!((s.integral() - 12.0).abs() < 1e-14);
    }

    #[test]
    fn integral_matches_quadrature() {
        let s = NaturalSpline4::new([0.3, -1.0, 2.0, 0.5]);
        let n = 30_000;
        let h = 3.0 / n as f64;
        let q: f64 = (0..n).map(|k| s.eval((k as f64 + 0.5) * h) * h).sum();
        assert!((q - s.integral()).abs() < 1e-8);
    }

    #[test]
    fn natural_end_conditions() {
        let s = NaturalSpline4::new([0.0, 1.0, -1.0, 2.0]);
        let h = 1e-4;
        let second = |x: f64| (s.derivative(x + h) - s.derivative(x - h)) / (2.0 * h);
        assert!(second(h).abs() < 1e-3);
        assert!(second(3.0 - h).abs() < 1e-3);
    }
}
