//! Discrete application of `c0^-2 ∂_t² - Δ` to a sampled field.

use rayon::prelude::*;

use crate::background::SpeedField;
use crate::error::{Error, Result};
use crate::geometry::Grid3;

use super::{SpaceTimeField, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveOperatorOptions {
    /// Standard deviation of a spatial Gaussian applied to each time level
    /// before differencing. `None` disables smoothing.
    pub mollify: Option<f64>,
    /// Keep every `time_stride`-th interior time level of the output.
    pub time_stride: usize,
}

impl Default for WaveOperatorOptions {
    fn default() -> Self {
        Self {
            mollify: None,
            time_stride: 1,
        }
    }
}

/// Centered second differences in space and time. The result lives on the
/// interior nodes (one node trimmed per face) and interior time levels.
pub fn apply_wave_operator(
    field: &SpaceTimeField,
    speed: &SpeedField,
    opts: WaveOperatorOptions,
) -> Result<SpaceTimeField> {
    let grid = field.grid;
    let [nx, ny, nz] = grid.dims;
    if nx < 3 || ny < 3 || nz < 3 || field.times.len < 3 {
        return Err(Error::StencilTooSmall(format!(
            "need at least 3 nodes per axis and 3 time levels, got {:?} x {}",
            grid.dims, field.times.len
        )));
    }
    if speed.grid() != &grid {
        return Err(Error::GridMismatch(
            "speed field and wavefield use different grids".into(),
        ));
    }
    let stride = opts.time_stride.max(1);
    let h = grid.spacing;
    let dt = field.times.dt;

    let smoothed: Option<SpaceTimeField> = match opts.mollify {
        Some(rho) if rho > 0.0 => Some(mollify(field, rho)),
        _ => None,
    };
    let src = smoothed.as_ref().unwrap_or(field);

    let out_grid = Grid3::new(
        [grid.origin[0] + h, grid.origin[1] + h, grid.origin[2] + h],
        h,
        [nx - 2, ny - 2, nz - 2],
    )?;
    let levels: Vec<usize> = (1..field.times.len - 1).step_by(stride).collect();
    let out_times = TimeGrid::new(field.times.time(levels[0]), dt * stride as f64, levels.len())?;
    let inv_c2: Vec<f64> = speed.values().iter().map(|c| 1.0 / (c * c)).collect();
    let inv_dt2 = 1.0 / (dt * dt);
    let inv_h2 = 1.0 / (h * h);
    let plane = nx * ny;
    let out_len = out_grid.len();

    let mut values = vec![0.0; levels.len() * out_len];
    values
        .par_chunks_mut(out_len)
        .zip(levels.par_iter())
        .for_each(|(out, &it)| {
            let um = src.level(it - 1);
            let u0 = src.level(it);
            let up = src.level(it + 1);
            let mut o = 0;
            for k in 1..nz - 1 {
                for j in 1..ny - 1 {
                    for i in 1..nx - 1 {
                        let g = i + nx * j + plane * k;
                        let utt = (up[g] - 2.0 * u0[g] + um[g]) * inv_dt2;
                        let lap = (u0[g - 1] + u0[g + 1] + u0[g - nx] + u0[g + nx]
                            + u0[g - plane]
                            + u0[g + plane]
                            - 6.0 * u0[g])
                            * inv_h2;
                        out[o] = inv_c2[g] * utt - lap;
                        o += 1;
                    }
                }
            }
        });
    SpaceTimeField::new(out_grid, out_times, values)
}

fn gaussian_weights(rho: f64, h: f64) -> Vec<f64> {
    let half = ((3.0 * rho / h).ceil() as usize).max(1);
    let mut w: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = (i as f64 - half as f64) * h;
            (-0.5 * (x / rho).powi(2)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian smoothing of each time level. Near faces the kernel is
/// renormalised over the nodes that exist.
pub fn mollify(field: &SpaceTimeField, rho: f64) -> SpaceTimeField {
    let grid = field.grid;
    let w = gaussian_weights(rho, grid.spacing);
    let half = (w.len() / 2) as isize;
    let [nx, ny, nz] = grid.dims;
    let n = grid.len();
    let mut out = field.clone();
    out.values.par_chunks_mut(n).for_each(|level| {
        let mut tmp = vec![0.0; n];
        for (axis, (len, step)) in [(nx, 1usize), (ny, nx), (nz, nx * ny)].into_iter().enumerate() {
            for idx in 0..n {
                let c = grid.coords(idx)[axis] as isize;
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (q, wq) in w.iter().enumerate() {
                    let s = c + q as isize - half;
                    if s < 0 || s >= len as isize {
                        continue;
                    }
                    let nb = (idx as isize + (s - c) * step as isize) as usize;
                    acc += wq * level[nb];
                    norm += wq;
                }
                tmp[idx] = acc / norm;
            }
            level.copy_from_slice(&tmp);
        }
    });
    out
}
