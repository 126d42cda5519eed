//! Experiment orchestration: configs, seeded runs with periodic evaluation,
//! grid sweeps, and CSV/text output.

mod config;
mod grid;
mod metrics;
mod output;
pub mod presets;
mod run;

pub use config::{EstimationConfig, EvalAction, RunConfig, MAX_EVAL_POINTS};
pub use grid::{
    rule_label, run_grid, summarize_cell, BaselineCell, CellRun, CellSummary, GridCell, GridResult, GridSpec, Stat,
};
pub use metrics::{
    area_under_curve, mean_std, parse_run_csv, read_run_csv, run_csv_string, write_run_csv, MetricsRecord, Provenance,
    RunCsvRow, RUN_CSV_HEADER,
};
pub use output::{emit_grid, emit_run, grid_csv_string, grid_summary_text, run_summary_text, GRID_CSV_HEADER};
pub use run::{
    estimation_error, evaluate, run_training, seeded_stream, RunOutcome, RunStatus, Trainer, UpdateFn, EVAL_SEED_OFFSET,
};
