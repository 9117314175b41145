//! Background medium: wave speed, travel times, amplitude and the smooth
//! remainder of the Green's function.
//!
//! Two tiers are supported. With a constant speed the singular part of the
//! Green's function is exact (amplitude 1, zero remainder). With a gridded
//! speed the travel times come from fast marching while the amplitude and
//! remainder keep their constant-speed values; results computed that way carry
//! an `approximate` flag.

mod fast_march;
mod green;
mod speed;

pub use fast_march::{fast_march, fast_march_seeded, fast_march_with, FastMarchOptions, TravelTimeField};
pub use green::GreenRemainder;
pub use speed::{SpeedField, SpeedKind};

use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Point};

/// Straight-ray travel time `|x - z| / c0` in a homogeneous medium.
pub fn travel_time_constant(x: Point, z: Point, c0: f64) -> f64 {
    distance(x, z) / c0
}

/// Value of the geometric-spreading amplitude with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplitude {
    pub value: f64,
    /// Set when the medium is not homogeneous and the unit value is a model
    /// approximation rather than exact.
    pub approximate: bool,
}

/// Amplitude of the delta singularity of the Green's function between `x`
/// and `z`. Exactly 1 for constant speed; gridded media use 1 as well and flag
/// the result.
pub fn amplitude_sigma(_x: Point, _z: Point, speed: &SpeedField) -> Amplitude {
    Amplitude {
        value: 1.0,
        approximate: speed.kind() != SpeedKind::Constant,
    }
}

/// How the travel time used by a computation was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelTimeSource {
    StraightRay,
    FastMarch,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid3;

    #[test]
    fn constant_travel_time_cases() {
        assert_eq!(travel_time_constant([1.0, 0.0, 0.0], [0.0; 3], 2.0), 0.5);
        assert_eq!(travel_time_constant([0.3, 0.2, 0.1], [0.3, 0.2, 0.1], 1.0), 0.0);
        let x = [0.4, -0.2, 1.0];
        let z = [0.1, 0.0, 0.0];
        let t1 = travel_time_constant(x, z, 1.3);
        let t2 = travel_time_constant(x, z, 2.6);
        assert!((t1 - 2.0 * t2).abs() < 1e-15);
    }

    #[test]
    fn amplitude_is_one_and_flagged_for_gridded() {
        let g = Grid3::new([0.0; 3], 0.1, [4, 4, 4]).unwrap();
        let c = SpeedField::constant(g, 1.5).unwrap();
        let a = amplitude_sigma([0.0; 3], [0.2; 3], &c);
        assert_eq!(a.value, 1.0);
        assert!(!a.approximate);
        let v = SpeedField::from_fn(g, |p| 1.0 + p[0]).unwrap();
        let a = amplitude_sigma([0.0; 3], [0.2; 3], &v);
        assert_eq!(a.value, 1.0);
        assert!(a.approximate);
        assert!(a.value > 0.0);
    }
}
