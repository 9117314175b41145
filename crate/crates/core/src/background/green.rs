use crate::error::{Error, Result};
use crate::wavefield::TimeSignal;

/// Smooth part `g(x, t; z)` of the Green's function for one (probe, center)
/// pair, sampled in `t`. Supported strictly after the arrival time `zeta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenRemainder {
    zeta: f64,
    kernel: Option<TimeSignal>,
}

impl GreenRemainder {
    /// Identically zero remainder (homogeneous medium).
    pub fn zero(zeta: f64) -> Self {
        Self { zeta, kernel: None }
    }

    /// Sampled remainder. Samples at or before `zeta` are forced to exactly
    /// zero; nonzero values there are rejected.
    pub fn sampled(zeta: f64, mut kernel: TimeSignal) -> Result<Self> {
        for i in 0..kernel.len() {
            if kernel.time(i) <= zeta {
                if kernel.samples[i] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "remainder is nonzero at t = {} before arrival {zeta}",
                        kernel.time(i)
                    )));
                }
                kernel.samples[i] = 0.0;
            }
        }
        Ok(Self {
            zeta,
            kernel: Some(kernel),
        })
    }

    /// Sample `f` on a grid, zeroing everything up to the arrival time.
    pub fn from_fn<F: Fn(f64) -> f64>(zeta: f64, dt: f64, len: usize, f: F) -> Self {
        let kernel = TimeSignal::from_fn(0.0, dt, len, |t| if t <= zeta { 0.0 } else { f(t) });
        Self {
            zeta,
            kernel: Some(kernel),
        }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn is_zero(&self) -> bool {
        match &self.kernel {
            None => true,
            Some(k) => k.samples.iter().all(|v| *v == 0.0),
        }
    }

    pub fn samples(&self) -> Option<&TimeSignal> {
        self.kernel.as_ref()
    }

    /// `g(t)` by linear interpolation; errors when `t` lies past the sampled
    /// window.
    pub fn value(&self, t: f64) -> Result<f64> {
        match &self.kernel {
            None => Ok(0.0),
            Some(_) if t <= self.zeta => Ok(0.0),
            Some(k) => k.interpolate_causal(t).ok_or_else(|| {
                Error::KernelWindow(format!("t = {t} beyond sampled end {}", k.t_end()))
            }),
        }
    }

    /// Errors unless the samples cover `[0, t_max]`.
    pub fn check_covers(&self, t_max: f64) -> Result<()> {
        match &self.kernel {
            None => Ok(()),
            Some(k) if k.t_end() + 1e-9 * k.dt >= t_max => Ok(()),
            Some(k) => Err(Error::KernelWindow(format!(
                "needs samples up to {t_max}, has {}",
                k.t_end()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_samples_are_exact_zero() {
        let g = GreenRemainder::from_fn(0.3, 0.01, 100, |_| 1.0);
        let k = g.samples().unwrap();
        for i in 0..k.len() {
            if k.time(i) <= 0.3 {
                assert_eq!(k.samples[i], 0.0);
            }
        }
        assert_eq!(g.value(0.2).unwrap(), 0.0);
    }

    #[test]
    fn acausal_samples_rejected() {
        let k = TimeSignal::from_fn(0.0, 0.1, 10, |_| 1.0);
        assert!(GreenRemainder::sampled(0.5, k).is_err());
    }

    #[test]
    fn window_check() {
        let g = GreenRemainder::from_fn(0.1, 0.01, 11, |_| 1.0);
        assert!(g.check_covers(0.1).is_ok());
        assert!(g.check_covers(0.2).is_err());
        assert!(GreenRemainder::zero(0.1).check_covers(100.0).is_ok());
    }
}
