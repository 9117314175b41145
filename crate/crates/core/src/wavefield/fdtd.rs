//! Second-order leapfrog solver for `c0^-2 v_tt - Δv = J` with zero initial
//! data.

use std::sync::Arc;

use rayon::prelude::*;

use crate::background::SpeedField;
use crate::error::{Error, Result};
use crate::geometry::{Grid3, Point};

use super::{SourceModel, SpaceTimeField, TimeGrid, TimeSignal};

pub const MAX_CFL: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
pub const DEFAULT_PADDING: usize = 15;

#[derive(Clone)]
pub enum Boundary {
    /// First-order Mur condition on every face.
    Absorbing,
    /// Boundary nodes are set from a known exact solution (test mode).
    Dirichlet(Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Absorbing => write!(f, "Absorbing"),
            Boundary::Dirichlet(_) => write!(f, "Dirichlet(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdtdOptions {
    pub boundary: Boundary,
    /// Minimum number of nodes between the source support and each face in
    /// absorbing mode.
    pub padding: usize,
    /// Points whose traces are recorded (trilinear interpolation).
    pub probes: Vec<Point>,
    /// Record the whole grid every `n` steps.
    pub snapshot_stride: Option<usize>,
}

impl Default for FdtdOptions {
    fn default() -> Self {
        Self {
            boundary: Boundary::Absorbing,
            padding: DEFAULT_PADDING,
            probes: Vec::new(),
            snapshot_stride: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdtdOutput {
    pub times: TimeGrid,
    pub probes: Vec<TimeSignal>,
    pub snapshots: Option<SpaceTimeField>,
    /// Discrete energy per step (kinetic plus gradient, time-staggered).
    pub energy: Vec<f64>,
}

impl FdtdOutput {
    pub fn final_max_abs(&self) -> f64 {
        self.snapshots
            .as_ref()
            .map(|s| s.level(s.times.len - 1).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(0.0)
    }
}

enum SourceEval<'a> {
    Separable { phi: Vec<f64>, model: &'a SourceModel },
    General(&'a SourceModel),
}

pub fn fdtd_solve(
    source: &SourceModel,
    speed: &SpeedField,
    horizon: f64,
    cfl: f64,
    opts: &FdtdOptions,
) -> Result<FdtdOutput> {
    if !(cfl > 0.0) || cfl > MAX_CFL * (1.0 + 1e-12) {
        return Err(Error::CflViolation {
            courant: cfl,
            limit: MAX_CFL,
        });
    }
    let grid = *speed.grid();
    if grid.dims.iter().any(|&d| d < 3) {
        return Err(Error::StencilTooSmall(format!("grid dims {:?}", grid.dims)));
    }
    let h = grid.spacing;
    let c_max = speed.max();
    let dt = cfl * h / c_max;
    let times = TimeGrid::covering(horizon, dt)?;

    if matches!(opts.boundary, Boundary::Absorbing) {
        check_padding(source, &grid, opts.padding)?;
    }
    for p in &opts.probes {
        if !grid.contains(*p) {
            return Err(Error::OutsideGrid(*p));
        }
    }

    let n = grid.len();
    let [nx, ny, nz] = grid.dims;
    let plane = nx * ny;
    let c2dt2: Vec<f64> = speed.values().iter().map(|c| (c * dt).powi(2)).collect();
    let inv_h2 = 1.0 / (h * h);

    let eval = match source {
        SourceModel::Separable { spatial, .. } => SourceEval::Separable {
            phi: (0..n).map(|i| spatial.value(grid.node_position(i))).collect(),
            model: source,
        },
        other => SourceEval::General(other),
    };
    let source_level = |t: f64, out: &mut [f64]| match &eval {
        SourceEval::Separable { phi, model } => {
            let psi = match model {
                SourceModel::Separable { temporal, .. } => temporal.value(t),
                _ => unreachable!(),
            };
            for (o, p) in out.iter_mut().zip(phi) {
                *o = p * psi;
            }
        }
        SourceEval::General(model) => {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = model.value(grid.node_position(i), t));
        }
    };

    let mut prev = vec![0.0; n];
    let mut curr = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut jbuf = vec![0.0; n];

    // Taylor start: v(dt) = dt^2/2 c^2 J(x, 0) for zero initial data.
    source_level(times.time(0), &mut jbuf);
    for i in 0..n {
        curr[i] = 0.5 * c2dt2[i] * jbuf[i];
    }
    if let Boundary::Dirichlet(exact) = &opts.boundary {
        set_boundary(&grid, &mut curr, |p| exact(p, times.time(1)));
    }

    let stencil = |i: usize, u: &[f64]| -> f64 {
        (u[i - 1] + u[i + 1] + u[i - nx] + u[i + nx] + u[i - plane] + u[i + plane] - 6.0 * u[i])
            * inv_h2
    };

    let mut probe_traces: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len); opts.probes.len()];
    let stencils: Vec<[(usize, f64); 8]> = opts
        .probes
        .iter()
        .map(|p| grid.trilinear_stencil(*p))
        .collect();
    let record = |u: &[f64], traces: &mut Vec<Vec<f64>>| {
        for (tr, st) in traces.iter_mut().zip(&stencils) {
            tr.push(st.iter().map(|&(i, w)| w * u[i]).sum());
        }
    };
    let mut snapshots = opts
        .snapshot_stride
        .map(|s| (s.max(1), Vec::<f64>::new(), 0usize));
    let snap = |u: &[f64], step: usize, snaps: &mut Option<(usize, Vec<f64>, usize)>| {
        if let Some((stride, buf, count)) = snaps {
            if step % *stride == 0 {
                buf.extend_from_slice(u);
                *count += 1;
            }
        }
    };

    record(&prev, &mut probe_traces);
    snap(&prev, 0, &mut snapshots);
    let mut energy = Vec::with_capacity(times.len);
    energy.push(0.0);
    if times.len > 1 {
        record(&curr, &mut probe_traces);
        snap(&curr, 1, &mut snapshots);
        energy.push(discrete_energy(&grid, &prev, &curr, speed.values(), dt));
    }

    for step in 1..times.len.saturating_sub(1) {
        let t = times.time(step);
        source_level(t, &mut jbuf);
        {
            let curr_ref = &curr;
            let prev_ref = &prev;
            let jref = &jbuf;
            let c2 = &c2dt2;
            next.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(k, slab)| {
                    if k == 0 || k == nz - 1 {
                        return;
                    }
                    for j in 1..ny - 1 {
                        for i in 1..nx - 1 {
                            let local = i + nx * j;
                            let g = local + k * plane;
                            slab[local] = 2.0 * curr_ref[g] - prev_ref[g]
                                + c2[g] * (stencil(g, curr_ref) + jref[g]);
                        }
                    }
                });
        }
        match &opts.boundary {
            Boundary::Absorbing => mur_boundary(&grid, &curr, &mut next, speed.values(), dt),
            Boundary::Dirichlet(exact) => {
                let tn = times.time(step + 1);
                set_boundary(&grid, &mut next, |p| exact(p, tn));
            }
        }
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
        record(&curr, &mut probe_traces);
        snap(&curr, step + 1, &mut snapshots);
        energy.push(discrete_energy(&grid, &prev, &curr, speed.values(), dt));
    }

    let probes = probe_traces
        .into_iter()
        .map(|samples| TimeSignal {
            t0: times.t0,
            dt,
            samples,
        })
        .collect();
    let snapshots = match snapshots {
        Some((stride, buf, count)) => Some(SpaceTimeField::new(
            grid,
            TimeGrid::new(times.t0, dt * stride as f64, count)?,
            buf,
        )?),
        None => None,
    };
    Ok(FdtdOutput {
        times,
        probes,
        snapshots,
        energy,
    })
}

fn check_padding(source: &SourceModel, grid: &Grid3, padding: usize) -> Result<()> {
    let ball = source.support();
    if ball.radius <= 0.0 {
        return Ok(());
    }
    let lo = grid.origin;
    let hi = grid.upper_corner();
    let pad = padding as f64 * grid.spacing;
    for a in 0..3 {
        if ball.center[a] - ball.radius < lo[a] + pad - 1e-12
            || ball.center[a] + ball.radius > hi[a] - pad + 1e-12
        {
            return Err(Error::SourceTouchesPadding(format!(
                "support ball {:?} r={} vs padding {} nodes on axis {}",
                ball.center, ball.radius, padding, a
            )));
        }
    }
    Ok(())
}

fn set_boundary<F: Fn(Point) -> f64>(grid: &Grid3, u: &mut [f64], f: F) {
    let [nx, ny, nz] = grid.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                    let idx = grid.index(i, j, k);
                    u[idx] = f(grid.position(i, j, k));
                }
            }
        }
    }
}

/// First-order Mur update: `u_b^{n+1} = u_{b-1}^n + r (u_{b-1}^{n+1} - u_b^n)`
/// with `r = (c dt - h) / (c dt + h)`, inward neighbour along the face normal.
fn mur_boundary(grid: &Grid3, curr: &[f64], next: &mut [f64], c: &[f64], dt: f64) {
    let [nx, ny, nz] = grid.dims;
    let h = grid.spacing;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let inward = if i == 0 {
                    Some(grid.index(1, j, k))
                } else if i == nx - 1 {
                    Some(grid.index(nx - 2, j, k))
                } else if j == 0 {
                    Some(grid.index(i, 1, k))
                } else if j == ny - 1 {
                    Some(grid.index(i, ny - 2, k))
                } else if k == 0 {
                    Some(grid.index(i, j, 1))
                } else if k == nz - 1 {
                    Some(grid.index(i, j, nz - 2))
                } else {
                    None
                };
                if let Some(inn) = inward {
                    let b = grid.index(i, j, k);
                    let cdt = c[b] * dt;
                    let r = (cdt - h) / (cdt + h);
                    next[b] = curr[inn] + r * (next[inn] - curr[b]);
                }
            }
        }
    }
}

fn discrete_energy(grid: &Grid3, prev: &[f64], curr: &[f64], c: &[f64], dt: f64) -> f64 {
    let [nx, ny, nz] = grid.dims;
    let h = grid.spacing;
    let vol = h * h * h;
    let mut e = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j, k);
                let ut = (curr[idx] - prev[idx]) / dt;
                e += ut * ut / (c[idx] * c[idx]);
                // forward-difference gradient, averaged over the two levels
                let mut g2 = 0.0;
                if i + 1 < nx {
                    let q = idx + 1;
                    g2 += 0.5 * ((curr[q] - curr[idx]).powi(2) + (prev[q] - prev[idx]).powi(2));
                }
                if j + 1 < ny {
                    let q = idx + nx;
                    g2 += 0.5 * ((curr[q] - curr[idx]).powi(2) + (prev[q] - prev[idx]).powi(2));
                }
                if k + 1 < nz {
                    let q = idx + nx * ny;
                    g2 += 0.5 * ((curr[q] - curr[idx]).powi(2) + (prev[q] - prev[idx]).powi(2));
                }
                e += g2 / (h * h);
            }
        }
    }
    0.5 * e * vol
}
