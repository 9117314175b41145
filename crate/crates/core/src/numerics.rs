//! Small numerical helpers shared across modules: compensated summation,
//! Gauss-Legendre rules and trapezoidal weights.

use std::f64::consts::PI;

/// Neumaier-compensated accumulator. Summation order is whatever the caller
/// feeds in, so ascending-index loops stay bitwise reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule: `panels` equal panels on [a, b], `order`
/// points each. Returns (nodes, weights).
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(lo + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Integrate `f` over [a, b] with a composite Gauss-Legendre rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = composite_gauss(a, b, panels, order);
    compensated_sum(xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)))
}

/// Trapezoidal weight for sample `j` of `n` on a uniform grid of step `dt`.
#[inline]
pub fn trapezoid_weight(j: usize, n: usize, dt: f64) -> f64 {
    if n <= 1 {
        0.0
    } else if j == 0 || j == n - 1 {
        0.5 * dt
    } else {
        dt
    }
}

/// Natural cubic spline through uniformly spaced samples `ys` (first at
/// `t0`, step `h`), evaluated at `t`; clamped to the end values outside.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    t0: f64,
    h: f64,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl UniformSpline {
    pub fn new(t0: f64, h: f64, ys: Vec<f64>) -> Self {
        let n = ys.len();
        let mut m = vec![0.0; n];
        if n >= 3 {
            // Thomas algorithm on m[i-1] + 4 m[i] + m[i+1] = 6 δ²y / h², m[0] = m[n-1] = 0
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (ys[i] - 2.0 * ys[i + 1] + ys[i + 2]) / (h * h);
                let denom = 4.0 - if i > 0 { c[i - 1] } else { 0.0 };
                c[i] = 1.0 / denom;
                d[i] = (rhs - if i > 0 { d[i - 1] } else { 0.0 }) / denom;
            }
            for i in (0..k).rev() {
                m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
            }
        }
        Self { t0, h, ys, m }
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.ys.len();
        if n == 0 {
            return 0.0;
        }
        if n == 1 || t <= self.t0 {
            return self.ys[0];
        }
        let x = (t - self.t0) / self.h;
        if x >= (n - 1) as f64 {
            return self.ys[n - 1];
        }
        let i = (x.floor() as usize).min(n - 2);
        let b = x - i as f64;
        let a = 1.0 - b;
        let h2 = self.h * self.h / 6.0;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h2
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_lines_and_converges() {
        let line = UniformSpline::new(0.0, 0.1, (0..11).map(|i| 2.0 * i as f64 * 0.1 - 1.0).collect());
        assert!((line.value(0.537) - (2.0 * 0.537 - 1.0)).abs() < 1e-13);
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let s = UniformSpline::new(0.0, h, (0..=n).map(|i| (3.0 * i as f64 * h).sin()).collect());
            (0..200)
                .map(|k| 0.25 + 0.5 * k as f64 / 200.0)
                .map(|t| (s.value(t) - (3.0 * t).sin()).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(err(20) / err(40) > 12.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        // degree 11 is the limit for six points
        let val: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((val - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_has_center_node() {
        let (x, w) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_handles_oscillation() {
        let v = integrate(|x| (50.0 * x).sin(), 0.0, 1.0, 64, 8);
        let exact = (1.0 - 50f64.cos()) / 50.0;
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((fit_slope(&xs, &ys) - 2.5).abs() < 1e-14);
    }
}
