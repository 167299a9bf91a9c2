//! Experiment driver: configuration, sweep execution and result files.

pub mod config;
pub mod emit;
pub mod single;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind, ModelConfig};
pub use single::{prepare_data, run_eval, run_gen_data, run_train, EvalOutcome, TrainOutcome};
pub use emit::{emit_results, parse_results, summarize, SummaryRow, RESULTS_HEADER};
pub use sweep::{
    resolve_betas, run_beta_grid, run_dim_sweep, run_experiment, run_noise_sweep,
    run_sample_sweep, train_once, tune_betas, Method, ResultRow, RunSeeds, SweepResult,
};
