//! Inverse steps: recover the background trace at each droplet center from
//! the probe signal, locate arrival jumps, invert the eikonal equation for
//! the speed and differentiate for the source.

use serde::Serialize;

use crate::background::{fast_march_seeded, SpeedField};
use crate::droplet::{advance, ResponseKernel};
use crate::error::{Error, Result};
use crate::geometry::{distance, Grid3, Point};
use crate::volterra::invert_direct;
use crate::wavefield::{
    apply_wave_operator, SpaceTimeField, TimeGrid, TimeSignal, WaveOperatorOptions,
};

/// `v̂(z, t) = 𝔸 w(x, ·)(t + ζ)`: invert the droplet operator, then undo the
/// travel-time delay. The result covers `[0, T - ζ]`.
pub fn recover_v(w: &TimeSignal, kern: &ResponseKernel) -> Result<TimeSignal> {
    let op = kern.operator()?;
    let shifted = invert_direct(&op, w)?;
    Ok(advance(&shifted, kern.zeta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpDetection {
    pub threshold: f64,
    pub noise_floor: f64,
    /// First crossing of the threshold; `None` when the signal never exceeds it.
    pub time: Option<f64>,
}

/// First time `|signal|` exceeds `theta`, linearly interpolated between the
/// bracketing samples. `None` if it never does.
pub fn detect_jump(signal: &TimeSignal, theta: f64) -> Option<f64> {
    let s = &signal.samples;
    let i = s.iter().position(|v| v.abs() > theta)?;
    if i == 0 {
        return Some(signal.t0);
    }
    let lo = s[i - 1].abs();
    let hi = s[i].abs();
    let frac = if hi > lo { ((theta - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
    Some(signal.time(i - 1) + frac * signal.dt)
}

/// Largest absolute sample on `[t0, window_end]`.
pub fn noise_floor(signal: &TimeSignal, window_end: f64) -> f64 {
    signal
        .samples
        .iter()
        .enumerate()
        .take_while(|(i, _)| signal.time(*i) <= window_end)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
}

/// `θ = max(4 · noise floor, C_θ a²)`.
pub fn calibrate_threshold(noise_floor: f64, radius: f64, c_theta: f64) -> f64 {
    (4.0 * noise_floor).max(c_theta * radius * radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRule {
    /// Constant in front of `a²`.
    pub c_theta: f64,
    pub radius: f64,
    /// End of the pre-arrival window used for the noise floor.
    pub noise_window: f64,
}

impl ThresholdRule {
    pub fn detect(&self, signal: &TimeSignal) -> JumpDetection {
        let floor = noise_floor(signal, self.noise_window);
        let threshold = calibrate_threshold(floor, self.radius, self.c_theta);
        JumpDetection {
            threshold,
            noise_floor: floor,
            time: detect_jump(signal, threshold),
        }
    }
}

/// Noise window `[0, 0.5 · min_z |x - z| / c_max]`.
pub fn default_noise_window(probe: Point, centers: &[Point], c_max: f64) -> f64 {
    let d = centers
        .iter()
        .map(|z| distance(probe, *z))
        .fold(f64::INFINITY, f64::min);
    0.5 * d / c_max
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub center: Point,
    pub detection: JumpDetection,
    /// Travel time used downstream: the detected jump, or an interpolated
    /// value for unusable centers.
    pub zeta_hat: Option<f64>,
    pub usable: bool,
    pub filled: bool,
}

/// Jump times for every droplet center. Centers whose signal never crosses
/// the threshold are flagged unusable and filled by inverse-distance
/// weighting of the usable ones.
pub fn sweep_travel_times(
    centers: &[Point],
    traces: &[TimeSignal],
    rule: &ThresholdRule,
) -> Result<Vec<SweepEntry>> {
    if centers.len() != traces.len() {
        return Err(Error::InvalidArgument(format!(
            "{} centers but {} traces",
            centers.len(),
            traces.len()
        )));
    }
    let mut entries: Vec<SweepEntry> = centers
        .iter()
        .zip(traces)
        .map(|(z, w)| {
            let detection = rule.detect(w);
            SweepEntry {
                center: *z,
                detection,
                zeta_hat: detection.time,
                usable: detection.time.is_some(),
                filled: false,
            }
        })
        .collect();
    fill_unusable(&mut entries);
    Ok(entries)
}

fn fill_unusable(entries: &mut [SweepEntry]) {
    let usable: Vec<(Point, f64)> = entries
        .iter()
        .filter(|e| e.usable)
        .map(|e| (e.center, e.zeta_hat.unwrap()))
        .collect();
    if usable.is_empty() {
        return;
    }
    for e in entries.iter_mut().filter(|e| !e.usable) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, z) in &usable {
            let d2 = distance(*p, e.center).powi(2);
            num += z / d2;
            den += 1.0 / d2;
        }
        e.zeta_hat = Some(num / den);
        e.filled = true;
    }
}

/// Travel times sampled on the nodes of a regular grid of droplet centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaGrid {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ZetaGrid {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} travel times for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(Point) -> f64>(grid: Grid3, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_position(i))).collect();
        Self { grid, values }
    }
}

/// Derivative along `axis` at node `c`: centered in the interior, second
/// order one-sided at the faces.
fn derivative(z: &ZetaGrid, c: [usize; 3], axis: usize) -> f64 {
    let g = &z.grid;
    let n = g.dims[axis];
    let h = g.spacing;
    let at = |k: usize| {
        let mut cc = c;
        cc[axis] = k;
        z.values[g.index(cc[0], cc[1], cc[2])]
    };
    let k = c[axis];
    if k == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(k + 1) - at(k - 1)) / (2.0 * h)
    }
}

/// `ĉ0 = 1 / |∇ζ|` on the nodes of the sweep grid.
pub fn recover_speed(zeta: &ZetaGrid) -> Result<SpeedField> {
    let g = zeta.grid;
    if g.dims.iter().any(|&d| d < 3) {
        return Err(Error::StencilTooSmall(format!(
            "speed recovery needs 3 nodes per axis, got {:?}",
            g.dims
        )));
    }
    let values = (0..g.len())
        .map(|i| {
            let c = g.coords(i);
            let grad2: f64 = (0..3).map(|a| derivative(zeta, c, a).powi(2)).sum();
            1.0 / grad2.sqrt()
        })
        .collect();
    SpeedField::from_values(g, values)
}

/// Harmonic mean of the per-probe speed estimates.
pub fn recover_speed_multi(zetas: &[ZetaGrid]) -> Result<SpeedField> {
    let first = zetas
        .first()
        .ok_or_else(|| Error::InvalidArgument("no travel-time maps given".into()))?;
    let mut inv = vec![0.0; first.grid.len()];
    for z in zetas {
        if z.grid != first.grid {
            return Err(Error::GridMismatch("travel-time maps on different grids".into()));
        }
        let c = recover_speed(z)?;
        for (acc, v) in inv.iter_mut().zip(c.values()) {
            *acc += 1.0 / v;
        }
    }
    let k = zetas.len() as f64;
    SpeedField::from_values(first.grid, inv.into_iter().map(|s| k / s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyCheck {
    /// Max |fast_march(ĉ0) - ζ̂| over the sweep nodes.
    pub max_error: f64,
    /// `3h / min ĉ0`.
    pub tolerance: f64,
    pub passed: bool,
}

/// Eikonal self-consistency: march through `ĉ0` from the sweep face that
/// faces the probe, seeded with `ζ̂` there, and compare with `ζ̂` elsewhere.
pub fn eikonal_consistency(zeta: &ZetaGrid, speed: &SpeedField) -> Result<ConsistencyCheck> {
    if speed.grid() != &zeta.grid {
        return Err(Error::GridMismatch("speed and travel times on different grids".into()));
    }
    let g = zeta.grid;
    let [nx, ny, nz] = g.dims;
    // The seeded face is the one with the smallest mean travel time.
    let mut best: Option<(f64, Vec<usize>)> = None;
    for axis in 0..3 {
        for side in [0usize, g.dims[axis] - 1] {
            let nodes: Vec<usize> = (0..g.len())
                .filter(|&i| g.coords(i)[axis] == side)
                .collect();
            let mean = nodes.iter().map(|&i| zeta.values[i]).sum::<f64>() / nodes.len() as f64;
            if best.as_ref().map_or(true, |(m, _)| mean < *m) {
                best = Some((mean, nodes));
            }
        }
    }
    let (_, face) = best.expect("grid has faces");
    debug_assert!(nx * ny * nz > face.len());
    let seeds: Vec<(usize, f64)> = face.iter().map(|&i| (i, zeta.values[i])).collect();
    let marched = fast_march_seeded(speed, &seeds)?;
    let max_error = marched
        .iter()
        .zip(&zeta.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let tolerance = 3.0 * g.spacing / speed.min();
    Ok(ConsistencyCheck {
        max_error,
        tolerance,
        passed: max_error <= tolerance,
    })
}

/// Stack per-center traces into a space-time field on `grid`, truncated to
/// the shortest trace.
pub fn assemble_field(grid: Grid3, traces: &[TimeSignal]) -> Result<SpaceTimeField> {
    if traces.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} traces for {} nodes",
            traces.len(),
            grid.len()
        )));
    }
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let first = &traces[0];
    let times = TimeGrid::new(first.t0, first.dt, len)?;
    let mut values = vec![0.0; len * grid.len()];
    for (idx, tr) in traces.iter().enumerate() {
        if (tr.dt - first.dt).abs() > 1e-12 * first.dt {
            return Err(Error::GridMismatch("traces use different time steps".into()));
        }
        for it in 0..len {
            values[it * grid.len() + idx] = tr.samples[it];
        }
    }
    SpaceTimeField::new(grid, times, values)
}

/// `Ĵ = ĉ0⁻² ∂t² v̂ - Δv̂` on the interior of the sweep grid.
pub fn recover_source(
    v_hats: &SpaceTimeField,
    speed: &SpeedField,
    opts: WaveOperatorOptions,
) -> Result<SpaceTimeField> {
    apply_wave_operator(v_hats, speed, opts)
}
