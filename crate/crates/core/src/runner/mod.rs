//! Configuration, the end-to-end pipeline, refinement studies and plot data.

pub mod config;
pub mod pipeline;
pub mod plotdata;
pub mod study;

pub use config::{parse_config, RunConfig};
pub use pipeline::{execute, run_pipeline, write_outputs, PipelineOutput, RunReport, Stages};
pub use plotdata::{emit_plotdata, read_plotdata, PlotData};
pub use study::{convergence_study, StudyTable};

#[cfg(test)]
mod tests;
