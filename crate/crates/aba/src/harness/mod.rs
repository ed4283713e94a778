//! Experiment orchestration: configs, runs, sweeps, embeddings and reports.

pub mod config;
pub mod embed;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{ArchChoice, ExperimentConfig, SourceKind};
pub use embed::{embed_features, image_grid_svg, Pca2};
pub use experiment::{eval_checkpoint, prepare_data, run_experiment, RunArtifacts};
pub use report::{read_results, render_text, write_csv as write_report_csv, ReportTable};
pub use sweep::{sweep, SweepParam, SweepSpec};
