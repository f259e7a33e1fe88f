//! Experiment harness: key=value configuration, JSON/CSV persistence, and
//! the generate/pretrain/adapt/eval/report commands the CLI exposes.

mod commands;
mod config;
mod files;

pub use commands::{
    cmd_adapt, cmd_eval, cmd_generate, cmd_pretrain, cmd_report, AdaptSummary, GenerateSummary,
    PretrainSummary, ReportSummary, SplitPaths,
};
pub use config::{AdaptGrid, DataSizes, ExperimentConfig, PretrainConfig};
pub use files::{
    load_checkpoint, load_dataset, load_scenes, read_results_csv, save_checkpoint, save_dataset,
    save_scenes, write_csv, CurveRow, EvalRow, ReportRow, ResultRow, FILE_VERSION,
};
