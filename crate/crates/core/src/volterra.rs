//! Second-kind convolution Volterra operators `f ↦ αf + ∫_0^t K(t-s) f(s) ds`
//! and two inverses: a truncated Neumann series with a factorial truncation
//! certificate, and product-trapezoid time marching.

use std::sync::Arc;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::wavefield::TimeSignal;

pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_NEUMANN_TERMS: usize = 4096;
const FFT_THRESHOLD: usize = 64;

#[derive(Debug, Clone)]
pub struct VolterraOp {
    pub alpha: f64,
    pub kernel: TimeSignal,
    /// Discrete L² norm of the kernel on its window.
    pub norm: f64,
}

impl VolterraOp {
    pub fn new(alpha: f64, kernel: TimeSignal) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::ZeroAlpha);
        }
        let norm = kernel.l2_norm();
        Ok(Self {
            alpha,
            kernel,
            norm,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.kernel.dt * (self.kernel.len().saturating_sub(1)) as f64
    }

    fn check_signal(&self, f: &TimeSignal) -> Result<()> {
        if (f.dt - self.kernel.dt).abs() > 1e-12 * self.kernel.dt {
            return Err(Error::GridMismatch(format!(
                "signal dt {} differs from kernel dt {}",
                f.dt, self.kernel.dt
            )));
        }
        if f.len() > self.kernel.len() {
            return Err(Error::GridMismatch(format!(
                "signal has {} samples but the kernel only {}",
                f.len(),
                self.kernel.len()
            )));
        }
        Ok(())
    }

    /// `α f + K ∗ f`.
    pub fn apply(&self, f: &TimeSignal) -> Result<TimeSignal> {
        self.check_signal(f)?;
        let conv = convolve(&self.kernel.samples, &f.samples, f.dt);
        let samples = f
            .samples
            .iter()
            .zip(&conv)
            .map(|(x, c)| self.alpha * x + c)
            .collect();
        Ok(TimeSignal {
            t0: f.t0,
            dt: f.dt,
            samples,
        })
    }

    /// `K ∗ f` alone.
    pub fn convolve(&self, f: &TimeSignal) -> Result<TimeSignal> {
        self.check_signal(f)?;
        Ok(TimeSignal {
            t0: f.t0,
            dt: f.dt,
            samples: convolve(&self.kernel.samples, &f.samples, f.dt),
        })
    }

    /// The quantity `‖K‖ √T / |α|` that drives the Neumann certificate.
    pub fn neumann_ratio(&self) -> f64 {
        self.norm * self.horizon().sqrt() / self.alpha.abs()
    }
}

/// Trapezoidal causal convolution `c_i = dt Σ_j w_j K_{i-j} f_j`, with end
/// weights `1/2` and `c_0 = 0`.
pub fn convolve(kernel: &[f64], f: &[f64], dt: f64) -> Vec<f64> {
    let m = f.len();
    if m == 0 {
        return Vec::new();
    }
    let full = if m < FFT_THRESHOLD {
        direct_full(kernel, f)
    } else {
        fft_full(&kernel[..m.min(kernel.len())], f)
    };
    (0..m)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                dt * (full[i] - 0.5 * kernel[i] * f[0] - 0.5 * kernel[0] * f[i])
            }
        })
        .collect()
}

fn direct_full(kernel: &[f64], f: &[f64]) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            let mut s = CompensatedSum::new();
            for j in 0..=i {
                s.add(kernel[i - j] * f[j]);
            }
            s.value()
        })
        .collect()
}

fn fft_full(kernel: &[f64], f: &[f64]) -> Vec<f64> {
    let m = f.len();
    let n = (2 * m).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(if i < kernel.len() { kernel[i] } else { 0.0 }, 0.0))
        .collect();
    let mut b: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(if i < m { f[i] } else { 0.0 }, 0.0))
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..m].iter().map(|c| c.re * scale).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NeumannReport {
    /// Number of powers `K^n` summed beyond the leading term.
    pub terms: usize,
    /// Certified relative truncation bound at termination.
    pub certified_bound: f64,
}

/// `q^n / sqrt(n!)` evaluated in logs.
fn factorial_term(q: f64, n: usize) -> f64 {
    if q == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    (n as f64 * q.ln() - 0.5 * ln_fact).exp()
}

/// Truncated resolvent series `Σ_{n≤N} (-1)^n α^{-n-1} K^n g`. `N` is the
/// first index at which `q^{N+1}/sqrt((N+1)!) < tol` with
/// `q = ‖K‖√T/|α|`, a bound on the relative size of the first omitted term.
pub fn invert_neumann(op: &VolterraOp, g: &TimeSignal, tol: f64) -> Result<TimeSignal> {
    invert_neumann_report(op, g, tol).map(|(f, _)| f)
}

pub fn invert_neumann_report(
    op: &VolterraOp,
    g: &TimeSignal,
    tol: f64,
) -> Result<(TimeSignal, NeumannReport)> {
    if op.alpha == 0.0 {
        return Err(Error::ZeroAlpha);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    op.check_signal(g)?;
    let q = op.neumann_ratio();
    let inv_alpha = 1.0 / op.alpha;
    let mut acc: Vec<f64> = g.samples.iter().map(|x| x * inv_alpha).collect();
    let mut power = g.samples.clone();
    let mut coeff = inv_alpha;
    let mut n = 0usize;
    loop {
        let bound = factorial_term(q, n + 1);
        if bound < tol || q == 0.0 {
            return Ok((
                TimeSignal {
                    t0: g.t0,
                    dt: g.dt,
                    samples: acc,
                },
                NeumannReport {
                    terms: n,
                    certified_bound: bound,
                },
            ));
        }
        if n >= MAX_NEUMANN_TERMS {
            return Err(Error::InvalidArgument(format!(
                "Neumann series did not certify tol {tol} within {MAX_NEUMANN_TERMS} terms (q = {q})"
            )));
        }
        power = convolve(&op.kernel.samples, &power, g.dt);
        coeff *= -inv_alpha;
        n += 1;
        for (a, p) in acc.iter_mut().zip(&power) {
            *a += coeff * p;
        }
    }
}

/// Product-trapezoid marching for `α f_i + dt Σ_j w_j K_{i-j} f_j = g_i`.
pub fn invert_direct(op: &VolterraOp, g: &TimeSignal) -> Result<TimeSignal> {
    if op.alpha == 0.0 {
        return Err(Error::ZeroAlpha);
    }
    op.check_signal(g)?;
    let m = g.len();
    let dt = g.dt;
    let k = &op.kernel.samples;
    let pivot = op.alpha + 0.5 * dt * k[0];
    if pivot.abs() <= 1e-14 * op.alpha.abs().max(dt * k[0].abs()) {
        return Err(Error::VanishingPivot(pivot));
    }
    let mut f = vec![0.0; m];
    if m == 0 {
        return Ok(g.clone());
    }
    f[0] = g.samples[0] / op.alpha;
    for i in 1..m {
        let mut s = 0.5 * k[i] * f[0];
        for j in 1..i {
            s += k[i - j] * f[j];
        }
        f[i] = (g.samples[i] - dt * s) / pivot;
    }
    Ok(TimeSignal {
        t0: g.t0,
        dt,
        samples: f,
    })
}

/// Relative L² residual `‖apply(op, f) - g‖ / ‖g‖`.
pub fn residual(op: &VolterraOp, f: &TimeSignal, g: &TimeSignal) -> Result<f64> {
    let r = op.apply(f)?;
    Ok(r.relative_l2_error(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(dt: f64, len: usize, f: impl Fn(f64) -> f64) -> TimeSignal {
        TimeSignal::from_fn(0.0, dt, len, f)
    }

    #[test]
    fn fft_matches_direct() {
        let k: Vec<f64> = (0..300).map(|i| (i as f64 * 0.1).sin()).collect();
        let f: Vec<f64> = (0..300).map(|i| (i as f64 * 0.03).cos()).collect();
        let a = direct_full(&k, &f);
        let b = fft_full(&k, &f);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_closed_forms() {
        let dt = 1e-3;
        let n = 1001;
        let one = sig(dt, n, |_| 1.0);
        let op = VolterraOp::new(2.0, sig(dt, n, |t| t)).unwrap();
        let out = op.apply(&one).unwrap();
        for (i, v) in out.samples.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((v - (2.0 + t * t / 2.0)).abs() < 1e-12);
        }
        let op = VolterraOp::new(2.0, sig(dt, n, |_| 1.0)).unwrap();
        let out = op.apply(&one).unwrap();
        for (i, v) in out.samples.iter().enumerate() {
            assert!((v - (2.0 + i as f64 * dt)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_divides() {
        let g = sig(0.01, 50, |t| t.sin());
        let op = VolterraOp::new(2.0, TimeSignal::zeros(0.0, 0.01, 50)).unwrap();
        let a = invert_neumann(&op, &g, 1e-8).unwrap();
        let b = invert_direct(&op, &g).unwrap();
        for i in 0..50 {
            assert_eq!(a.samples[i], g.samples[i] / 2.0);
            assert_eq!(b.samples[i], g.samples[i] / 2.0);
        }
    }

    #[test]
    fn exponential_solution() {
        let m = 4096;
        let dt = 1.0 / (m - 1) as f64;
        let op = VolterraOp::new(2.0, sig(dt, m, |_| 1.0)).unwrap();
        let g = sig(dt, m, |_| 1.0);
        for f in [invert_neumann(&op, &g, 1e-10).unwrap(), invert_direct(&op, &g).unwrap()] {
            let err = f
                .samples
                .iter()
                .enumerate()
                .map(|(i, v)| (v - 0.5 * (-(i as f64) * dt / 2.0).exp()).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn zero_alpha_rejected() {
        assert!(matches!(
            VolterraOp::new(0.0, TimeSignal::zeros(0.0, 0.1, 4)),
            Err(Error::ZeroAlpha)
        ));
    }

    #[test]
    fn vanishing_pivot_rejected() {
        let op = VolterraOp::new(-0.05, sig(0.1, 10, |_| 1.0)).unwrap();
        let g = sig(0.1, 10, |_| 1.0);
        assert!(matches!(invert_direct(&op, &g), Err(Error::VanishingPivot(_))));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let op = VolterraOp::new(1.0, sig(0.1, 10, |_| 1.0)).unwrap();
        assert!(matches!(op.apply(&sig(0.2, 10, |_| 1.0)), Err(Error::GridMismatch(_))));
    }
}
