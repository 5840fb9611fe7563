//! Adam training loop, evaluation, metric logs and the comparison experiments.

mod adam;
mod evaluate;
mod experiment;
mod metrics;
mod train;

pub use adam::Adam;
pub use evaluate::{evaluate, Evaluation};
pub use experiment::{
    generate_missing, run_experiment, ArmReport, CurvePoint, DatasetPreset, ExperimentConfig, ExperimentName, ExperimentReport, RunReport,
};
pub use metrics::{MetricLog, MetricRow};
pub use train::{best_checkpoint, train, train_baseline_icgan, train_examples, Example, ModelVariant, TrainConfig, TrainOutcome, TrainState};
