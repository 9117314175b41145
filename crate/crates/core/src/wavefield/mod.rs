//! Background wavefield: sources, the retarded potential, a finite-difference
//! solver and the discrete wave operator.

pub mod fdtd;
mod field;
pub mod operator;
pub mod retarded;
mod signal;
pub mod source;

pub use fdtd::{fdtd_solve, Boundary, FdtdOptions, FdtdOutput};
pub use field::{SpaceTimeField, TimeGrid};
pub use operator::{apply_wave_operator, WaveOperatorOptions};
pub use retarded::{retarded_potential, retarded_potential_constant, RetardedQuadrature};
pub use signal::TimeSignal;
pub use source::{RadialBump, SourceModel, TemporalProfile};
