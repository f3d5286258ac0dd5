//! Experiment configuration, seeded training runs, evaluation, and metrics output.

mod config;
mod curves;
mod rollout;
mod run;
mod suite;

pub use config::{parse_override, DemoConfig, ExperimentConfig, RunConfig};
pub use curves::{emit_curves, find_reports, load_labeled_reports, CurveFiles, AGGREGATE_COLUMNS, LONG_COLUMNS};
pub use rollout::{evaluate, evaluate_agent, train_agent, CurveRow, EvalResult, RunSettings, TrainLog, Trainer};
pub use run::{
    actor_text_path, checkpoint_path, mean_std, metrics_csv, new_trainer, report_path, resolve_demos, run_training, seed_csv_path,
    seed_streams, settings, train_seed, train_seed_resumable, trainer_checkpoint_path, write_atomic, Aggregate, AgentCheckpoint, DemoSet, EvalReport, SeedOutcome, SeedReport,
    METRICS_COLUMNS,
};
pub use suite::{run_suite, suite_cells, Cell, SuiteName, SuiteReport, SuiteRow, DEMO_COUNTS, K_VALUES};
