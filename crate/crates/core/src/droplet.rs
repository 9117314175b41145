//! Response of a small resonant droplet seen from a probe outside it.
//!
//! At a probe `x` the measured signal is `w = α ṽ + K ∗ ṽ` where
//! `ṽ(t) = v(z, t - ζ(x, z))` is the background wave at the droplet center,
//! delayed by the travel time to the probe. The coefficient `α` and kernel
//! `K = Σ (a_n + b_n)` are built from the droplet eigensystem.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::background::{
    amplitude_sigma, travel_time_constant, Amplitude, GreenRemainder, SpeedField,
    TravelTimeField, TravelTimeSource,
};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::numerics::CompensatedSum;
use crate::spectrum::{check_riesz_condition, EigenMode, EigenSystem};
use crate::volterra::{convolve, VolterraOp};
use crate::wavefield::{TimeGrid, TimeSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropletSpec {
    pub center: Point,
    pub radius: f64,
    /// Interior wave speed per unit radius: `c1 = kappa * radius`.
    pub kappa: f64,
}

impl DropletSpec {
    pub fn new(center: Point, radius: f64, kappa: f64) -> Result<Self> {
        if !(radius > 0.0) || !(kappa > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "droplet needs positive radius and kappa, got a={radius}, kappa={kappa}"
            )));
        }
        Ok(Self {
            center,
            radius,
            kappa,
        })
    }

    pub fn c1(&self) -> f64 {
        self.kappa * self.radius
    }

    /// Contrast `c0^2 / c1^2 - 1` against a background speed `c0`.
    pub fn contrast(&self, c0: f64) -> f64 {
        (c0 / self.c1()).powi(2) - 1.0
    }
}

/// Background quantities attached to one (probe, droplet center) pair.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub probe: Point,
    pub center: Point,
    /// Background speed at the droplet center.
    pub c0: f64,
    pub zeta: f64,
    pub zeta_source: TravelTimeSource,
    pub sigma: Amplitude,
    pub green: GreenRemainder,
}

impl ProbePair {
    /// Homogeneous medium: straight-ray travel time, unit amplitude, zero
    /// remainder.
    pub fn constant(probe: Point, center: Point, c0: f64) -> Result<Self> {
        if !(c0 > 0.0) {
            return Err(Error::NonPositiveSpeed { node: 0, value: c0 });
        }
        let zeta = travel_time_constant(probe, center, c0);
        Ok(Self {
            probe,
            center,
            c0,
            zeta,
            zeta_source: TravelTimeSource::StraightRay,
            sigma: Amplitude {
                value: 1.0,
                approximate: false,
            },
            green: GreenRemainder::zero(zeta),
        })
    }

    /// Gridded medium: travel time read from a fast-marching field rooted at
    /// the probe, amplitude and remainder kept at their homogeneous values.
    pub fn gridded(
        probe: Point,
        center: Point,
        speed: &SpeedField,
        travel: &TravelTimeField,
    ) -> Result<Self> {
        if !speed.grid().contains(center) {
            return Err(Error::OutsideGrid(center));
        }
        let zeta = travel.value_at(center);
        Ok(Self {
            probe,
            center,
            c0: speed.value_at(center),
            zeta,
            zeta_source: TravelTimeSource::FastMarch,
            sigma: amplitude_sigma(probe, center, speed),
            green: GreenRemainder::zero(zeta),
        })
    }

    pub fn with_green(mut self, green: GreenRemainder) -> Self {
        self.green = green;
        self
    }

    /// `σ / (4π c0 ζ)`, the common prefactor of `α` and `a_n`.
    fn prefactor(&self) -> Result<f64> {
        if !(self.zeta > 0.0) {
            return Err(Error::ZeroTravelTime);
        }
        Ok(self.sigma.value / (4.0 * PI * self.c0 * self.zeta))
    }
}

/// `α = -σ S / (4π c0 ζ)` with `S` the eigen-series sum, together with the
/// bound on the part of `|α|` lost to truncation.
pub fn alpha_coeff(sys: &EigenSystem, pair: &ProbePair) -> Result<(f64, f64)> {
    let pre = pair.prefactor()?;
    Ok((-pre * sys.series_sum, pre * sys.tail_bound))
}

/// `a_n(t) = -σ/(4π c0 ζ) (∫e_n)²/λ_n ω_n sin(ω_n t)` with `ω_n = c1/√λ_n`.
pub fn kernel_a_n(mode: &EigenMode, pair: &ProbePair, d: &DropletSpec, t: f64) -> Result<f64> {
    let pre = pair.prefactor()?;
    let omega = mode.frequency(d.c1());
    Ok(-pre * mode.weight() * omega * (omega * t).sin())
}

/// `b_n(t) = -(∫e_n)²/λ_n [ω_n ∫_0^{t+ζ} sin(ω_n(t+ζ-s)) g(s) ds + g(t+ζ)]`
/// on `times`, by trapezoidal quadrature. Exactly zero for a zero remainder.
pub fn kernel_b_n(
    mode: &EigenMode,
    pair: &ProbePair,
    d: &DropletSpec,
    times: TimeGrid,
) -> Result<TimeSignal> {
    let shifted = match shifted_green(pair, times)? {
        None => return Ok(TimeSignal::zeros(times.t0, times.dt, times.len)),
        Some(g) => g,
    };
    Ok(b_n_from_shifted(mode, d, times, &shifted))
}

/// `g(t + ζ)` on `times`, or `None` when the remainder vanishes.
fn shifted_green(pair: &ProbePair, times: TimeGrid) -> Result<Option<Vec<f64>>> {
    if pair.green.is_zero() {
        return Ok(None);
    }
    pair.green.check_covers(times.t_end() + pair.zeta)?;
    (0..times.len)
        .map(|i| pair.green.value(times.time(i) + pair.zeta))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn b_n_from_shifted(mode: &EigenMode, d: &DropletSpec, times: TimeGrid, gs: &[f64]) -> TimeSignal {
    // g vanishes up to ζ, so the integral over s reduces to u = t + ζ - s in [0, t].
    let omega = mode.frequency(d.c1());
    let sine: Vec<f64> = (0..times.len).map(|i| (omega * times.time(i)).sin()).collect();
    let conv = convolve(&sine, gs, times.dt);
    let w = mode.weight();
    let samples = conv
        .iter()
        .zip(gs)
        .map(|(c, g)| -w * (omega * c + g))
        .collect();
    TimeSignal {
        t0: times.t0,
        dt: times.dt,
        samples,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseKernel {
    pub alpha: f64,
    /// Upper bound on the truncated part of `|α|`.
    pub alpha_tail: f64,
    pub kernel: TimeSignal,
    pub zeta: f64,
    pub zeta_source: TravelTimeSource,
    pub n_max: usize,
    /// `σ/(4π c0 ζ)` times the eigen-series tail bound; see [`w_tail_bound`].
    pub tail_coeff: f64,
    /// Discrete L² norm of `K`.
    pub norm: f64,
    /// Set when amplitude or remainder are approximations (gridded medium).
    pub approximate: bool,
}

impl ResponseKernel {
    pub fn operator(&self) -> Result<VolterraOp> {
        VolterraOp::new(self.alpha, self.kernel.clone())
    }

    pub fn times(&self) -> TimeGrid {
        TimeGrid {
            t0: self.kernel.t0,
            dt: self.kernel.dt,
            len: self.kernel.len(),
        }
    }
}

/// The part of `K` shared by every probe pair of one droplet:
/// `Σ_n -(∫e_n)²/λ_n ω_n sin(ω_n t)`. A pair's `Σ a_n` is this times
/// `σ/(4π c0 ζ)`.
#[derive(Debug, Clone)]
pub struct KernelTemplate {
    droplet: DropletSpec,
    times: TimeGrid,
    unit: Vec<f64>,
    sys: EigenSystem,
}

impl KernelTemplate {
    pub fn new(sys: &EigenSystem, d: &DropletSpec, horizon: f64, dt: f64) -> Result<Self> {
        if (sys.radius - d.radius).abs() > 1e-12 * d.radius {
            return Err(Error::InvalidArgument(format!(
                "eigensystem radius {} does not match droplet radius {}",
                sys.radius, d.radius
            )));
        }
        if !check_riesz_condition(d.radius, d.c1(), horizon) {
            return Err(Error::RieszViolation {
                c1_t: d.c1() * horizon,
                radius: d.radius,
            });
        }
        let times = TimeGrid::covering(horizon, dt)?;
        let c1 = d.c1();
        let coeffs: Vec<(f64, f64)> = sys
            .modes
            .iter()
            .map(|m| {
                let omega = m.frequency(c1);
                (-m.weight() * omega, omega)
            })
            .collect();
        let unit = (0..times.len)
            .map(|i| {
                let t = times.time(i);
                let mut acc = CompensatedSum::new();
                for &(amp, omega) in &coeffs {
                    acc.add(amp * (omega * t).sin());
                }
                acc.value()
            })
            .collect();
        Ok(Self {
            droplet: *d,
            times,
            unit,
            sys: sys.clone(),
        })
    }

    pub fn times(&self) -> TimeGrid {
        self.times
    }

    /// Kernel for one probe pair; the droplet center of `pair` may differ
    /// from the template's, only the radius and kappa matter.
    pub fn kernel_for(&self, pair: &ProbePair) -> Result<ResponseKernel> {
        let (alpha, alpha_tail) = alpha_coeff(&self.sys, pair)?;
        let pre = pair.prefactor()?;
        let mut samples: Vec<f64> = self.unit.iter().map(|u| pre * u).collect();
        let gs = shifted_green(pair, self.times)?;
        if let Some(g) = &gs {
            let mut acc: Vec<CompensatedSum> = samples
                .iter()
                .map(|v| {
                    let mut c = CompensatedSum::new();
                    c.add(*v);
                    c
                })
                .collect();
            for m in &self.sys.modes {
                let b = b_n_from_shifted(m, &self.droplet, self.times, g);
                for (a, v) in acc.iter_mut().zip(&b.samples) {
                    a.add(*v);
                }
            }
            samples = acc.iter().map(CompensatedSum::value).collect();
        }
        let kernel = TimeSignal {
            t0: self.times.t0,
            dt: self.times.dt,
            samples,
        };
        let norm = kernel.l2_norm();
        Ok(ResponseKernel {
            alpha,
            alpha_tail,
            kernel,
            zeta: pair.zeta,
            zeta_source: pair.zeta_source,
            n_max: self.sys.n_max(),
            tail_coeff: pre * self.sys.tail_bound,
            norm,
            approximate: pair.sigma.approximate || gs.is_some(),
        })
    }
}

/// Sample `K = Σ_{n≤N} (a_n + b_n)` on `[0, horizon]` with step `dt`.
pub fn assemble_kernel(
    sys: &EigenSystem,
    pair: &ProbePair,
    d: &DropletSpec,
    horizon: f64,
    dt: f64,
) -> Result<ResponseKernel> {
    KernelTemplate::new(sys, d, horizon, dt)?.kernel_for(pair)
}

/// `ṽ(t_i) = v(t_i - ζ)` on `times`; exactly zero for `t_i < ζ`.
pub fn delay(v: &TimeSignal, zeta: f64, times: TimeGrid) -> Result<TimeSignal> {
    let samples = (0..times.len)
        .map(|i| {
            let s = times.time(i) - zeta;
            if s < 0.0 {
                return Ok(0.0);
            }
            v.interpolate_causal(s).ok_or_else(|| {
                Error::KernelWindow(format!(
                    "trace ends at {} but t - zeta reaches {s}",
                    v.t_end()
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TimeSignal {
        t0: times.t0,
        dt: times.dt,
        samples,
    })
}

/// `ṽ(t) -> ṽ(t + ζ)`: undo [`delay`], returning samples on `[0, T - ζ]`.
pub fn advance(v: &TimeSignal, zeta: f64) -> TimeSignal {
    let span = v.t_end() - v.t0 - zeta;
    let len = if span < 0.0 {
        0
    } else {
        (span / v.dt + 1e-9).floor() as usize + 1
    };
    let samples = (0..len)
        .map(|i| v.interpolate(v.t0 + i as f64 * v.dt + zeta).unwrap_or(0.0))
        .collect();
    TimeSignal {
        t0: v.t0,
        dt: v.dt,
        samples,
    }
}

/// Synthesized droplet signal `w = α ṽ + K ∗ ṽ` at the probe. The O(a²)
/// remainder of the asymptotic expansion is not included.
pub fn synthesize_w(kern: &ResponseKernel, v_trace: &TimeSignal) -> Result<TimeSignal> {
    if (v_trace.dt - kern.kernel.dt).abs() > 1e-12 * kern.kernel.dt {
        return Err(Error::GridMismatch(format!(
            "trace dt {} differs from kernel dt {}",
            v_trace.dt, kern.kernel.dt
        )));
    }
    let vt = delay(v_trace, kern.zeta, kern.times())?;
    let mut w = kern.operator()?.apply(&vt)?;
    // exact zeros before the arrival
    for (i, s) in w.samples.iter_mut().enumerate() {
        if vt.time(i) < kern.zeta {
            *s = 0.0;
        }
    }
    Ok(w)
}

/// Max-norm bound on the change of `w` from modes beyond `n_max`:
/// `tail_coeff (2‖ṽ‖∞ + |ṽ(0)| + TV(ṽ))`, obtained by integrating each
/// omitted sine term by parts.
pub fn w_tail_bound(kern: &ResponseKernel, v_trace: &TimeSignal) -> Result<f64> {
    let vt = delay(v_trace, kern.zeta, kern.times())?;
    let v0 = vt.samples.first().copied().unwrap_or(0.0).abs();
    Ok(kern.tail_coeff * (2.0 * vt.max_abs() + v0 + vt.total_variation()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::build_eigensystem;

    fn setup(a: f64, n_max: usize) -> (EigenSystem, ProbePair, DropletSpec) {
        let d = DropletSpec::new([0.5, 0.5, 0.5], a, 0.5).unwrap();
        let pair = ProbePair::constant([0.5, 0.5, 0.0], d.center, 1.0).unwrap();
        (build_eigensystem(a, n_max).unwrap(), pair, d)
    }

    #[test]
    fn alpha_single_mode_value() {
        let d = DropletSpec::new([0.0; 3], 1.0, 0.5).unwrap();
        let pair = ProbePair::constant([1.0, 0.0, 0.0], [0.0; 3], 1.0).unwrap();
        let sys = build_eigensystem(1.0, 1).unwrap();
        let (alpha, _) = alpha_coeff(&sys, &pair).unwrap();
        assert!((alpha + 13.7142 / (4.0 * PI)).abs() < 1e-3, "{alpha}");
        let _ = d;
    }

    #[test]
    fn zero_travel_time_rejected() {
        let pair = ProbePair::constant([0.2; 3], [0.2; 3], 1.0).unwrap();
        let sys = build_eigensystem(0.1, 5).unwrap();
        assert!(matches!(alpha_coeff(&sys, &pair), Err(Error::ZeroTravelTime)));
    }

    #[test]
    fn a_n_frequency_is_kappa_m() {
        let (sys, pair, d) = setup(0.05, 3);
        let m = &sys.modes[0];
        assert_eq!(kernel_a_n(m, &pair, &d, 0.0).unwrap(), 0.0);
        let period = PI / (d.kappa * m.m);
        let v = kernel_a_n(m, &pair, &d, period).unwrap();
        let peak = kernel_a_n(m, &pair, &d, period / 2.0).unwrap();
        assert!(v.abs() < 1e-12 * peak.abs());
    }

    #[test]
    fn single_mode_kernel_is_a1() {
        let (sys, pair, d) = setup(0.05, 1);
        let k = assemble_kernel(&sys, &pair, &d, 1.0, 0.01).unwrap();
        assert_eq!(k.kernel.samples[0], 0.0);
        for (i, v) in k.kernel.samples.iter().enumerate() {
            let t = i as f64 * 0.01;
            assert!((v - kernel_a_n(&sys.modes[0], &pair, &d, t).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn riesz_violation_rejected() {
        let (sys, pair, d) = setup(0.05, 4);
        assert!(matches!(
            assemble_kernel(&sys, &pair, &d, 2.4, 0.01),
            Err(Error::RieszViolation { .. })
        ));
    }

    #[test]
    fn b_n_zero_for_zero_remainder_and_box_direct_term() {
        let (sys, pair, d) = setup(0.05, 2);
        let times = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let b = kernel_b_n(&sys.modes[0], &pair, &d, times).unwrap();
        assert!(b.samples.iter().all(|v| *v == 0.0));

        // Box of height 1 on (ζ, ζ + 0.1]; the direct term is -w g(t + ζ).
        let zeta = pair.zeta;
        let g = GreenRemainder::from_fn(zeta, 0.001, 2000, |t| {
            if t > zeta && t <= zeta + 0.1 {
                1.0
            } else {
                0.0
            }
        });
        let pair = pair.with_green(g);
        let mode = &sys.modes[0];
        let b = kernel_b_n(mode, &pair, &d, times).unwrap();
        let w = mode.weight();
        let omega = mode.frequency(d.c1());
        // t = 0.05: g(t+ζ) = 1 and ∫_0^t sin(ω u) du = (1 - cos ω t)/ω
        let t = 0.05;
        let expected = -w * ((1.0 - (omega * t).cos()) + 1.0);
        assert!((b.samples[5] - expected).abs() < 1e-3 * expected.abs());
    }

    #[test]
    fn synthesis_shift_and_scale() {
        let kern = ResponseKernel {
            alpha: -1.0,
            alpha_tail: 0.0,
            kernel: TimeSignal::zeros(0.0, 0.01, 101),
            zeta: 0.3,
            zeta_source: TravelTimeSource::StraightRay,
            n_max: 0,
            tail_coeff: 0.0,
            norm: 0.0,
            approximate: false,
        };
        let v = TimeSignal::from_fn(0.0, 0.01, 101, |t| t.max(0.0));
        let w = synthesize_w(&kern, &v).unwrap();
        for (i, s) in w.samples.iter().enumerate() {
            let t = i as f64 * 0.01;
            assert!((s + (t - 0.3).max(0.0)).abs() < 1e-12);
        }
        let bad = TimeSignal::zeros(0.0, 0.02, 51);
        assert!(matches!(synthesize_w(&kern, &bad), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn synthesized_w_is_causal_and_linear() {
        let (sys, pair, d) = setup(0.04, 200);
        let kern = assemble_kernel(&sys, &pair, &d, 1.5, 1e-3).unwrap();
        let v1 = TimeSignal::from_fn(0.0, 1e-3, 1501, |t| (t * t * (3.0 * t).sin()).max(0.0));
        let v2 = TimeSignal::from_fn(0.0, 1e-3, 1501, |t| t.powi(3));
        let w1 = synthesize_w(&kern, &v1).unwrap();
        let w2 = synthesize_w(&kern, &v2).unwrap();
        let w12 = synthesize_w(&kern, &v1.add(&v2.scaled(2.5)).unwrap()).unwrap();
        for i in 0..w1.len() {
            if w1.time(i) < kern.zeta {
                assert_eq!(w1.samples[i], 0.0);
                assert_eq!(w12.samples[i], 0.0);
            }
            let lin = w1.samples[i] + 2.5 * w2.samples[i];
            assert!((w12.samples[i] - lin).abs() <= 1e-12 * w12.max_abs().max(1e-300));
        }
    }
}
