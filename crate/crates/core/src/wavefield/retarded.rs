//! Free-space retarded potential
//! `v(x, t) = (1/4pi) ∫ J(y, t - |x - y|/c0) / |x - y| dy` for a homogeneous
//! background.

use std::f64::consts::PI;

use crate::background::SpeedField;
use crate::error::{Error, Result};
use crate::geometry::{distance, Point};
use crate::numerics::{gauss_legendre, CompensatedSum};

use super::source::{RadialBump, TemporalProfile};
use super::{SourceModel, TimeGrid, TimeSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetardedQuadrature {
    /// Cell size of the midpoint rule over the source support. Ignored for
    /// gridded sources, whose own nodes are used.
    pub cell: f64,
    /// Use the one-dimensional shell reduction for separable radial sources.
    pub radial_fast_path: bool,
}

impl Default for RetardedQuadrature {
    fn default() -> Self {
        Self {
            cell: 0.02,
            radial_fast_path: true,
        }
    }
}

/// Retarded potential of `source` observed at `x` on the time grid `times`.
pub fn retarded_potential(
    source: &SourceModel,
    speed: &SpeedField,
    x: Point,
    times: TimeGrid,
    quad: RetardedQuadrature,
) -> Result<TimeSignal> {
    let c0 = speed.constant_value().ok_or_else(|| {
        Error::InvalidArgument("retarded potential needs a constant-speed background".into())
    })?;
    retarded_potential_constant(source, c0, x, times, quad)
}

pub fn retarded_potential_constant(
    source: &SourceModel,
    c0: f64,
    x: Point,
    times: TimeGrid,
    quad: RetardedQuadrature,
) -> Result<TimeSignal> {
    if !(c0 > 0.0) {
        return Err(Error::NonPositiveSpeed { node: 0, value: c0 });
    }
    match source {
        SourceModel::Separable { spatial, temporal } if quad.radial_fast_path => {
            Ok(radial_shell(spatial, temporal, c0, x, times))
        }
        SourceModel::Gridded(field) => {
            let g = field.grid;
            let cells: Vec<Point> = (0..g.len()).map(|i| g.node_position(i)).collect();
            Ok(midpoint(source, c0, x, times, &cells, g.spacing))
        }
        _ => {
            if !(quad.cell > 0.0) {
                return Err(Error::InvalidArgument("quadrature cell must be positive".into()));
            }
            let cells = support_cells(source, quad.cell);
            Ok(midpoint(source, c0, x, times, &cells, quad.cell))
        }
    }
}

fn support_cells(source: &SourceModel, h: f64) -> Vec<Point> {
    let ball = source.support();
    if ball.radius <= 0.0 {
        return Vec::new();
    }
    let n = (2.0 * ball.radius / h).ceil() as usize;
    let lo = [
        ball.center[0] - 0.5 * n as f64 * h,
        ball.center[1] - 0.5 * n as f64 * h,
        ball.center[2] - 0.5 * n as f64 * h,
    ];
    let mut cells = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = [
                    lo[0] + (i as f64 + 0.5) * h,
                    lo[1] + (j as f64 + 0.5) * h,
                    lo[2] + (k as f64 + 0.5) * h,
                ];
                // keep every cell that intersects the support ball
                if distance(p, ball.center) <= ball.radius + 0.8661 * h {
                    cells.push(p);
                }
            }
        }
    }
    cells
}

/// Midpoint rule over cubic cells. A cell containing the observation point
/// is refined so that no quadrature node lands on the singularity.
fn midpoint(
    source: &SourceModel,
    c0: f64,
    x: Point,
    times: TimeGrid,
    cells: &[Point],
    h: f64,
) -> TimeSignal {
    let mut out = TimeSignal::zeros(times.t0, times.dt, times.len);
    let mut nodes: Vec<(Point, f64)> = Vec::with_capacity(cells.len());
    for &c in cells {
        let inside = (0..3).all(|a| (x[a] - c[a]).abs() <= 0.5 * h);
        if inside {
            refine(c, h, x, 0, &mut nodes);
        } else {
            nodes.push((c, h * h * h));
        }
    }
    // precompute distances once
    let geom: Vec<(Point, f64, f64)> = nodes
        .into_iter()
        .filter_map(|(p, vol)| {
            let r = distance(x, p);
            (r > 0.0).then_some((p, r, vol / (4.0 * PI * r)))
        })
        .collect();
    for (it, slot) in out.samples.iter_mut().enumerate() {
        let t = times.time(it);
        let mut acc = CompensatedSum::new();
        for &(p, r, w) in &geom {
            let tr = t - r / c0;
            if tr <= 0.0 {
                continue;
            }
            let j = source.value(p, tr);
            if j != 0.0 {
                acc.add(w * j);
            }
        }
        *slot = acc.value();
    }
    out
}

fn refine(center: Point, h: f64, x: Point, depth: usize, out: &mut Vec<(Point, f64)>) {
    const SPLIT: usize = 4;
    let sub = h / SPLIT as f64;
    for k in 0..SPLIT {
        for j in 0..SPLIT {
            for i in 0..SPLIT {
                let p = [
                    center[0] - 0.5 * h + (i as f64 + 0.5) * sub,
                    center[1] - 0.5 * h + (j as f64 + 0.5) * sub,
                    center[2] - 0.5 * h + (k as f64 + 0.5) * sub,
                ];
                let inside = (0..3).all(|a| (x[a] - p[a]).abs() <= 0.5 * sub);
                if inside && depth < 3 {
                    refine(p, sub, x, depth + 1, out);
                } else {
                    out.push((p, sub * sub * sub));
                }
            }
        }
    }
}

/// Shell reduction for `J = f(|y - c|) psi(t)`:
/// `v(x, t) = (1 / 2d) ∫ psi(t - r/c0) F(r) dr` with
/// `F(r) = ∫_{|d - r|}^{d + r} rho f(rho) d rho` and `d = |x - c|`.
fn radial_shell(
    bump: &RadialBump,
    temporal: &TemporalProfile,
    c0: f64,
    x: Point,
    times: TimeGrid,
) -> TimeSignal {
    let d = distance(x, bump.center);
    let big_r = bump.radius;
    let r_lo = (d - big_r).max(0.0);
    let r_hi = d + big_r;
    let at_center = d < 1e-12 * big_r.max(1.0);
    // Both factors are polynomials in r between breakpoints for the onset
    // profile, so a fixed Gauss rule per sub-interval is exact up to rounding.
    let polynomial = temporal.is_piecewise_polynomial();
    let (gx, gw) = gauss_legendre(if polynomial { 16 } else { 12 });
    let panels_per_piece = if polynomial { 1 } else { 24 };
    let shell = |r: f64| -> f64 {
        if at_center {
            2.0 * r * bump.profile(r)
        } else {
            bump.shell_moment((d - r).abs(), d + r) / d
        }
    };
    let t_breaks = temporal.breakpoints();
    let mut out = TimeSignal::zeros(times.t0, times.dt, times.len);
    for (it, slot) in out.samples.iter_mut().enumerate() {
        let t = times.time(it);
        let upper = r_hi.min(c0 * t);
        if upper <= r_lo {
            continue;
        }
        let mut cuts = vec![r_lo, upper];
        for cand in [big_r - d, d - big_r, d] {
            if cand > r_lo && cand < upper {
                cuts.push(cand);
            }
        }
        for tb in &t_breaks {
            let rb = c0 * (t - tb);
            if rb > r_lo && rb < upper {
                cuts.push(rb);
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * r_hi.max(1.0));
        let mut acc = CompensatedSum::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ph = (b - a) / panels_per_piece as f64;
            for p in 0..panels_per_piece {
                let lo = a + p as f64 * ph;
                for (xg, wg) in gx.iter().zip(&gw) {
                    let r = lo + 0.5 * ph * (xg + 1.0);
                    acc.add(0.5 * ph * wg * temporal.value(t - r / c0) * shell(r));
                }
            }
        }
        *slot = 0.5 * acc.value();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ball;

    fn bump_source() -> SourceModel {
        SourceModel::Separable {
            spatial: RadialBump {
                center: [0.0; 3],
                radius: 0.3,
                amplitude: 1.0,
                power: 4,
            },
            temporal: TemporalProfile::Onset {
                order: 2,
                duration: 0.6,
            },
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let tg = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let v = retarded_potential_constant(
            &SourceModel::zero(),
            1.0,
            [0.5, 0.0, 0.0],
            tg,
            RetardedQuadrature::default(),
        )
        .unwrap();
        assert!(v.samples.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn exact_zero_before_arrival() {
        let tg = TimeGrid::new(0.0, 0.01, 120).unwrap();
        let x = [0.8, 0.0, 0.0];
        let v = retarded_potential_constant(&bump_source(), 1.0, x, tg, RetardedQuadrature::default())
            .unwrap();
        for (i, s) in v.samples.iter().enumerate() {
            if tg.time(i) < 0.5 {
                assert_eq!(*s, 0.0);
            }
        }
        assert!(v.max_abs() > 0.0);
    }

    #[test]
    fn midpoint_agrees_with_shell_reduction() {
        let tg = TimeGrid::new(0.0, 0.02, 60).unwrap();
        let src = bump_source();
        let x = [0.5, 0.1, -0.05];
        let exact = retarded_potential_constant(&src, 1.0, x, tg, RetardedQuadrature::default())
            .unwrap();
        let coarse = RetardedQuadrature {
            cell: 0.02,
            radial_fast_path: false,
        };
        let mid = retarded_potential_constant(&src, 1.0, x, tg, coarse).unwrap();
        let err = mid.relative_l2_error(&exact);
        assert!(err < 2e-3, "relative error {err}");
    }

    #[test]
    fn probe_inside_support_is_finite() {
        let tg = TimeGrid::new(0.0, 0.02, 30).unwrap();
        let src = bump_source();
        let x = [0.0, 0.0, 0.0];
        let shell = retarded_potential_constant(&src, 1.0, x, tg, RetardedQuadrature::default())
            .unwrap();
        let mid = retarded_potential_constant(
            &src,
            1.0,
            x,
            tg,
            RetardedQuadrature {
                cell: 0.02,
                radial_fast_path: false,
            },
        )
        .unwrap();
        assert!(mid.samples.iter().all(|v| v.is_finite()));
        assert!(mid.relative_l2_error(&shell) < 5e-3);
    }

    #[test]
    fn superposition() {
        let tg = TimeGrid::new(0.0, 0.02, 40).unwrap();
        let support = Ball {
            center: [0.0; 3],
            radius: 0.35,
        };
        let bump = bump_source();
        let a = SourceModel::analytic(support, move |y, t| bump.value(y, t));
        let b = SourceModel::analytic(support, |y, t| {
            let r2 = (y[0] - 0.1).powi(2) + y[1] * y[1] + y[2] * y[2];
            if r2 < 0.04 && t > 0.0 {
                (0.04 - r2) * t * t
            } else {
                0.0
            }
        });
        let (a2, b2) = (a.clone(), b.clone());
        let ab = SourceModel::analytic(support, move |y, t| a2.value(y, t) + b2.value(y, t));
        let q = RetardedQuadrature {
            cell: 0.04,
            radial_fast_path: false,
        };
        let x = [0.6, 0.2, 0.0];
        let va = retarded_potential_constant(&a, 1.0, x, tg, q).unwrap();
        let vb = retarded_potential_constant(&b, 1.0, x, tg, q).unwrap();
        let vab = retarded_potential_constant(&ab, 1.0, x, tg, q).unwrap();
        let sum = va.add(&vb).unwrap();
        for (u, w) in vab.samples.iter().zip(&sum.samples) {
            assert!((u - w).abs() <= 1e-12 * sum.max_abs());
        }
    }
}
