//! Scenario files, end-to-end runs, persistence and convergence studies.

pub mod persist;
pub mod pipeline;
pub mod scenario;
pub mod study;

pub use pipeline::{run_pipeline, MetricsRecord, PipelineOutput, ReconstructionReport, RunOptions};
pub use scenario::Scenario;
pub use study::{convergence_study, StudyAxis, StudyResult};
