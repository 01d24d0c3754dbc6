//! Model assembly, multi-seed training and scheme comparison.

mod config;
mod model;
mod report;
mod stats;
mod train;

pub use config::{DataPaths, ExperimentConfig, Metric};
pub use model::{SentenceMasks, TaggerModel};
pub use report::{compare_on, compare_schemes, to_json_string, Comparison, ComparisonReport, SchemeSummary, ALPHA};
pub use stats::{mean, spread, std_dev, variance, welch_t_test, Welch};
pub use train::{evaluate, run_multi_seed, train_on, train_one, ExperimentData, MultiSeedOutcome, RunResult, SeedFailure};
