use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Ball, Grid3, Point};

use super::TimeSignal;

/// Uniform time axis `t0 + i dt`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { t0, dt, len })
    }

    /// Samples `0, dt, ..., >= horizon`.
    pub fn covering(horizon: f64, dt: f64) -> Result<Self> {
        let len = (horizon / dt - 1e-9).ceil().max(0.0) as usize + 1;
        Self::new(0.0, dt, len)
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }
}

/// Scalar field sampled on a space grid at uniformly spaced times. Storage
/// is time-major: all nodes of level 0, then level 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid3,
    pub times: TimeGrid,
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: Grid3, times: TimeGrid) -> Self {
        Self {
            values: vec![0.0; grid.len() * times.len],
            grid,
            times,
        }
    }

    pub fn from_fn<F: Fn(Point, f64) -> f64>(grid: Grid3, times: TimeGrid, f: F) -> Self {
        let mut out = Self::zeros(grid, times);
        let n = grid.len();
        for it in 0..times.len {
            let t = times.time(it);
            for idx in 0..n {
                out.values[it * n + idx] = f(grid.node_position(idx), t);
            }
        }
        out
    }

    pub fn new(grid: Grid3, times: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * times.len {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes x {} times",
                values.len(),
                grid.len(),
                times.len
            )));
        }
        Ok(Self {
            grid,
            times,
            values,
        })
    }

    #[inline]
    pub fn at(&self, it: usize, idx: usize) -> f64 {
        self.values[it * self.grid.len() + idx]
    }

    pub fn level(&self, it: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[it * n..(it + 1) * n]
    }

    pub fn level_mut(&mut self, it: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[it * n..(it + 1) * n]
    }

    pub fn trace(&self, idx: usize) -> TimeSignal {
        TimeSignal {
            t0: self.times.t0,
            dt: self.times.dt,
            samples: (0..self.times.len).map(|it| self.at(it, idx)).collect(),
        }
    }

    /// Trilinear in space, linear in time; zero outside the time window.
    pub fn interpolate(&self, p: Point, t: f64) -> f64 {
        if self.times.len == 0 {
            return 0.0;
        }
        let x = (t - self.times.t0) / self.times.dt;
        let last = (self.times.len - 1) as f64;
        if x < 0.0 || x > last {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.times.len.saturating_sub(2));
        let f = if self.times.len == 1 { 0.0 } else { x - i as f64 };
        let a = self.grid.interpolate(self.level(i), p);
        if f == 0.0 {
            return a;
        }
        let b = self.grid.interpolate(self.level(i + 1), p);
        a + f * (b - a)
    }

    /// Smallest ball around the grid center containing every node that is
    /// nonzero at some time.
    pub fn support_ball(&self) -> Ball {
        let lo = self.grid.origin;
        let hi = self.grid.upper_corner();
        let center = [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ];
        let n = self.grid.len();
        let mut radius = 0.0f64;
        for idx in 0..n {
            if (0..self.times.len).any(|it| self.values[it * n + idx] != 0.0) {
                radius = radius.max(distance(center, self.grid.node_position(idx)));
            }
        }
        Ball { center, radius }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
