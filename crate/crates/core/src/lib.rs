//! Droplet-based probing of a wave-equation background: spectral data of the
//! droplet operator, forward synthesis of droplet responses, Volterra
//! inversion and reconstruction of travel times, speed and source.

pub mod background;
pub mod droplet;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numerics;
pub mod reconstruct;
pub mod spectrum;
pub mod volterra;
pub mod wavefield;

pub use error::{Error, Result, ValidationIssue};
