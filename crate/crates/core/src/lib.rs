//! Predicting and scheduling energy-delay product of multithreaded regions of
//! interest on composite-core processors.
//!
//! A region is profiled once on the most aggressive configuration. Its
//! hardware counters, joined with a configuration encoding, feed a regressor
//! that estimates EDP for every configuration. The scheduler then picks the
//! best base or composed configuration by the variation-threshold rule.

// Dense numeric loops index several matrices at once.
#![allow(clippy::needless_range_loop)]

pub mod config_space;
pub mod dataset;
mod error;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod scheduler;

pub use config_space::{
    classify_config, enumerate_configs, feasible, Architecture, ConfigClass, ConfigKey,
    Configuration, CoreType, OperatingPoint, DEFAULT_VARIATION_THRESHOLD,
};
pub use dataset::{
    build_training_table, edp, generate_synthetic, split, Counter, Dataset, EdpValue, HpcVector,
    OracleEntry, OracleTable, RoiId, RoiMeasurement, SyntheticSpec, TrainTable, N_COUNTERS,
};
pub use error::{Error, Result};
pub use features::{
    feature_report, pearson, select_features, FeatureReport, Scaler, SelectionMode,
};
pub use models::{evaluate, rmae, train, Algorithm, Hyperparams, Predictor};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineSummary};
pub use report::{tradeoff, CostTable, TradeoffReport};
pub use scheduler::{
    decide, distribution, regret, schedule_application, schedule_roi, DistributionReport,
    EdpEstimator, Rule, SchedulingDecision,
};
