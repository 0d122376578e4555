//! Six-metric evaluation, stratified k-fold plans and the repeated-seed
//! experiment harness.

mod experiment;
mod folds;
mod metrics;

pub use experiment::{
    majority_baseline, run_experiment, run_once, Ae2LstmPipeline, ExperimentConfig, FoldPredictor, MetricStats,
    RunOutput, RunSummary,
};
pub use folds::{fold_assignment, make_folds, Fold, FoldPlan};
pub use metrics::{auc_rank, compute_metrics, Confusion, Metric, MetricsReport};
