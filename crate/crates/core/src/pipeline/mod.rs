//! Dataset ingestion, configuration, stage orchestration, persistence, and
//! evaluation, plus the synthetic dataset generator used for desk-scale
//! runs.

pub mod config;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use config::{PipelineConfig, Strategy};
pub use manifest::{load_test_manifest, load_train_manifest, TestRecord, TrainRecord};
pub use stages::{
    load_stack,
    evaluate_decisions, load_decisions, load_metrics, run_all, run_stage, DecisionRow, Stage,
    Workspace,
};
pub use synth::{generate_synthetic, SynthOutput, SynthParams};
