//! Configuration, artifact container, experiment pipeline and reports.

mod config;
mod container;
mod pipeline;
mod report;

pub use config::{
    CineConfig, ExperimentConfig, FlowConfig, FlowTransforms, ImageSource, NoiseConfig, ReconConfig, SamplingChoice,
    StagePhysiology, DEFAULT_CONFIG,
};
pub use container::{read_container, write_container, ArrayData, Container, Dtype, MAGIC, VERSION};
pub use pipeline::{
    acquire_cine, acquire_flow, kspace_container, mode_beat, repeat_statistics, run_cine, run_experiment, run_flow, run_keys, run_phantom, write_manifest, CineRun,
    ExperimentOutcome, FlowRun, Manifest, ManifestEntry, PhysioSummary, ReconSummary, RunDetails, RunKey, RunRecord,
};
pub use report::{report, ReportSummary};
