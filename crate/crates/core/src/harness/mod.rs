//! Training, evaluation, ablation drivers and the command line.

mod ablation;
mod cli;
mod config;
mod metrics;
mod train;

pub use ablation::{
    run_ablation, run_conditions, suite_conditions, summarize, write_curves_csv, write_pe_table_csv, write_runs_csv,
    write_suite_outputs, write_summary_csv, write_wide_csv, Condition, ConditionSummary, RunRecord, Suite,
    DROPOUT_RATES, KEY_SET_CANDIDATES,
};
pub use cli::run as run_cli;
pub use config::{ExperimentConfig, OptimizerConfig, OptimizerKind, SspeMode};
pub use metrics::{epochs_to_fraction, evaluate, predict, Confusion, MetricsReport};
pub use train::{
    embed_split, epoch_sequences, evaluate_grids, train, train_with_observer, EpochLog, Optimizer, TrainOutcome,
};
