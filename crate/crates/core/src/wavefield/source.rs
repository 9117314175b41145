use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Ball, Point};

use super::SpaceTimeField;

pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Compactly supported radial bump `A (1 - |y - c|^2 / R^2)^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
    pub power: u32,
}

impl RadialBump {
    #[inline]
    pub fn profile(&self, rho: f64) -> f64 {
        if rho >= self.radius {
            0.0
        } else {
            let s = 1.0 - (rho / self.radius).powi(2);
            self.amplitude * s.powi(self.power as i32)
        }
    }

    #[inline]
    pub fn value(&self, y: Point) -> f64 {
        self.profile(distance(y, self.center))
    }

    pub fn support(&self) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius,
        }
    }

    /// `∫_lo^hi rho f(rho) d rho`, with the bounds clipped to the support.
    pub fn shell_moment(&self, lo: f64, hi: f64) -> f64 {
        let r = self.radius;
        let lo = lo.clamp(0.0, r);
        let hi = hi.clamp(0.0, r);
        if hi <= lo {
            return 0.0;
        }
        let k1 = (self.power + 1) as i32;
        let prim = |x: f64| (1.0 - (x / r).powi(2)).powi(k1);
        self.amplitude * r * r / (2.0 * k1 as f64) * (prim(lo) - prim(hi))
    }
}

/// Causal time profile of a separable source.
#[derive(Clone)]
pub enum TemporalProfile {
    /// `(t/tau)^(p+1) (1 - t/tau)^4` on `[0, tau]`, scaled to unit peak: the
    /// first `p + 1` derivatives (orders 0..=p) vanish at `t = 0`.
    Onset { order: u32, duration: f64 },
    Custom { f: TimeFn, vanishing_order: Option<u32> },
}

impl fmt::Debug for TemporalProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalProfile::Onset { order, duration } => f
                .debug_struct("Onset")
                .field("order", order)
                .field("duration", duration)
                .finish(),
            TemporalProfile::Custom {
                vanishing_order, ..
            } => f
                .debug_struct("Custom")
                .field("vanishing_order", vanishing_order)
                .finish_non_exhaustive(),
        }
    }
}

impl TemporalProfile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TemporalProfile::Onset { order, duration } => {
                if t <= 0.0 || t >= *duration {
                    return 0.0;
                }
                let q = (*order + 1) as f64;
                let s = t / duration;
                let peak_at = q / (q + 4.0);
                let peak = peak_at.powf(q) * (1.0 - peak_at).powi(4);
                s.powf(q) * (1.0 - s).powi(4) / peak
            }
            TemporalProfile::Custom { f, .. } => {
                if t <= 0.0 {
                    0.0
                } else {
                    f(t)
                }
            }
        }
    }

    pub fn vanishing_order(&self) -> Option<u32> {
        match self {
            TemporalProfile::Onset { order, .. } => Some(*order),
            TemporalProfile::Custom {
                vanishing_order, ..
            } => *vanishing_order,
        }
    }

    /// Times where the profile has reduced smoothness, used as quadrature
    /// breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            TemporalProfile::Onset { duration, .. } => vec![0.0, *duration],
            TemporalProfile::Custom { .. } => vec![0.0],
        }
    }

    /// True when the profile is a polynomial between breakpoints.
    pub fn is_piecewise_polynomial(&self) -> bool {
        matches!(self, TemporalProfile::Onset { .. })
    }
}

/// Source term `J(x, t)` of the background wave equation.
#[derive(Clone)]
pub enum SourceModel {
    /// `J = phi(y) psi(t)` with a radial bump in space.
    Separable {
        spatial: RadialBump,
        temporal: TemporalProfile,
    },
    /// Arbitrary closure with a declared spatial support.
    Analytic { density: SpaceTimeFn, support: Ball },
    /// Samples on a space-time grid, linearly interpolated.
    Gridded(SpaceTimeField),
}

impl fmt::Debug for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceModel::Separable { spatial, temporal } => f
                .debug_struct("Separable")
                .field("spatial", spatial)
                .field("temporal", temporal)
                .finish(),
            SourceModel::Analytic { support, .. } => f
                .debug_struct("Analytic")
                .field("support", support)
                .finish_non_exhaustive(),
            SourceModel::Gridded(field) => f.debug_tuple("Gridded").field(&field.grid).finish(),
        }
    }
}

impl SourceModel {
    pub fn zero() -> Self {
        SourceModel::Analytic {
            density: Arc::new(|_, _| 0.0),
            support: Ball {
                center: [0.0; 3],
                radius: 0.0,
            },
        }
    }

    pub fn analytic<F>(support: Ball, f: F) -> Self
    where
        F: Fn(Point, f64) -> f64 + Send + Sync + 'static,
    {
        SourceModel::Analytic {
            density: Arc::new(f),
            support,
        }
    }

    pub fn value(&self, y: Point, t: f64) -> f64 {
        match self {
            SourceModel::Separable { spatial, temporal } => {
                let phi = spatial.value(y);
                if phi == 0.0 {
                    0.0
                } else {
                    phi * temporal.value(t)
                }
            }
            SourceModel::Analytic { density, .. } => density(y, t),
            SourceModel::Gridded(field) => field.interpolate(y, t),
        }
    }

    /// Ball containing the spatial support.
    pub fn support(&self) -> Ball {
        match self {
            SourceModel::Separable { spatial, .. } => spatial.support(),
            SourceModel::Analytic { support, .. } => *support,
            SourceModel::Gridded(field) => field.support_ball(),
        }
    }

    pub fn vanishing_order(&self) -> Option<u32> {
        match self {
            SourceModel::Separable { temporal, .. } => temporal.vanishing_order(),
            _ => None,
        }
    }

    pub fn sum(a: SourceModel, b: SourceModel) -> SourceModel {
        let sa = a.support();
        let sb = b.support();
        let d = distance(sa.center, sb.center);
        let support = if sa.radius >= d + sb.radius {
            sa
        } else if sb.radius >= d + sa.radius {
            sb
        } else {
            let radius = 0.5 * (d + sa.radius + sb.radius);
            let t = if d > 0.0 { (radius - sa.radius) / d } else { 0.0 };
            Ball {
                center: [
                    sa.center[0] + t * (sb.center[0] - sa.center[0]),
                    sa.center[1] + t * (sb.center[1] - sa.center[1]),
                    sa.center[2] + t * (sb.center[2] - sa.center[2]),
                ],
                radius,
            }
        };
        SourceModel::Analytic {
            density: Arc::new(move |y, t| a.value(y, t) + b.value(y, t)),
            support,
        }
    }
}
