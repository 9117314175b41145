use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{trapezoid_weight, CompensatedSum};

/// Uniformly sampled scalar time series starting at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl TimeSignal {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn zeros(t0: f64, dt: f64, len: usize) -> Self {
        Self {
            t0,
            dt,
            samples: vec![0.0; len],
        }
    }

    /// Samples `f` at `t0 + i*dt` for `i < len`.
    pub fn from_fn<F: Fn(f64) -> f64>(t0: f64, dt: f64, len: usize, f: F) -> Self {
        Self {
            t0,
            dt,
            samples: (0..len).map(|i| f(t0 + i as f64 * dt)).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Linear interpolation; `None` outside the sampled window.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let x = (t - self.t0) / self.dt;
        let last = (self.len() - 1) as f64;
        let tol = 1e-9;
        if x < -tol || x > last + tol {
            return None;
        }
        let x = x.clamp(0.0, last);
        let i = (x.floor() as usize).min(self.len().saturating_sub(2));
        if self.len() == 1 {
            return Some(self.samples[0]);
        }
        let f = x - i as f64;
        Some(self.samples[i] + f * (self.samples[i + 1] - self.samples[i]))
    }

    /// Interpolation of a causal signal: zero before `t0`, `None` past the end.
    pub fn interpolate_causal(&self, t: f64) -> Option<f64> {
        if t < self.t0 {
            Some(0.0)
        } else {
            self.interpolate(t)
        }
    }

    pub fn same_grid(&self, other: &TimeSignal) -> bool {
        let tol = 1e-12 * self.dt.max(other.dt);
        (self.dt - other.dt).abs() <= tol
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt.max(1.0)
            && self.len() == other.len()
    }

    pub fn check_same_grid(&self, other: &TimeSignal) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(t0={}, dt={}, n={}) vs (t0={}, dt={}, n={})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )))
        }
    }

    /// Discrete L2 norm with trapezoidal weights.
    pub fn l2_norm(&self) -> f64 {
        let n = self.len();
        let mut acc = CompensatedSum::new();
        for (j, v) in self.samples.iter().enumerate() {
            acc.add(trapezoid_weight(j, n, self.dt) * v * v);
        }
        acc.value().max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Total variation of the samples.
    pub fn total_variation(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> TimeSignal {
        TimeSignal {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &TimeSignal) -> Result<TimeSignal> {
        self.check_same_grid(other)?;
        Ok(TimeSignal {
            t0: self.t0,
            dt: self.dt,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Restriction to the first `len` samples.
    pub fn truncated(&self, len: usize) -> TimeSignal {
        TimeSignal {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples[..len.min(self.len())].to_vec(),
        }
    }

    /// Relative discrete L2 distance `|self - reference| / |reference|` over the
    /// common prefix of both signals.
    pub fn relative_l2_error(&self, reference: &TimeSignal) -> f64 {
        let n = self.len().min(reference.len());
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for j in 0..n {
            let w = trapezoid_weight(j, n, self.dt);
            let d = self.samples[j] - reference.samples[j];
            num.add(w * d * d);
            den.add(w * reference.samples[j] * reference.samples[j]);
        }
        let den = den.value();
        if den == 0.0 {
            return num.value().sqrt();
        }
        (num.value() / den).sqrt()
    }

    /// CSV with a `t,value` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 32 + 8);
        s.push_str("t,value\n");
        for (i, v) in self.samples.iter().enumerate() {
            s.push_str(&format!("{:.12e},{:.17e}\n", self.time(i), v));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<TimeSignal> {
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            ts.push(parse(parts.next())?);
            vs.push(parse(parts.next())?);
        }
        if ts.len() < 2 {
            return Err(Error::Parse("trace needs at least two samples".into()));
        }
        let dt = ts[1] - ts[0];
        for w in ts.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Parse("trace is not uniformly sampled".into()));
            }
        }
        TimeSignal::new(ts[0], dt, vs)
    }
}
