//! End-to-end experiments: reference data, both training stages, metrics and
//! plot tables.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod reference;

pub use config::{config_to_annotated_text, config_to_text, field, parse_config, ExperimentConfig, FieldDef, TestId, FIELDS};
pub use metrics::{load_report, mse, relative_l2, save_report, MetricReport, MetricRow};
pub use pipeline::{run_pipeline, run_pipeline_full, run_stage1, run_stage2, PipelineOutput};
pub use plot::{emit_loss_history, emit_plot_data, PlotField};
pub use reference::{compute_reference, load_or_run_reference, load_snapshots, run_reference, Snapshots};
