//! Backtests: rolling-window runs, grid search, reports and ablations.

mod ablation;
mod config;
mod report;
mod runner;

pub use ablation::{
    incremental_covariate_ablation, incremental_covariate_ablation_with, incremental_feature_sets, lag_ablation,
    lag_ablation_with, percent_reduction, CovariateAblation, CovariateCell, LagAblation, LagAblationCell,
};
pub use config::{ExperimentConfig, FeatureSet, FeatureSpec, GridSpec, ModelSpec, RollingSpec, HORIZONS};
pub use report::{Aggregate, CellReport, ExperimentReport, SkippedWindow, WindowResult};
pub use runner::{
    build_dataset, derive_seed, fit_for_interpretation, grid_search, plan, run_experiment, run_experiment_with,
    splits_for, Forecaster, GridChoice, InterpretationFit, PlannedWindow, StandardForecaster, MIN_TRAIN_ROWS,
};
