//! Metrics, the simulated experiment matrix, and its CSV/SVG outputs.

pub mod experiment;
pub mod metrics;
pub mod plot;
pub mod report;

pub use experiment::{
    run_experiment, ConfigFile, EvalCadence, ExperimentConfig, ExperimentError, ExperimentOutput, MatrixConfig, Method,
    MetricRecord, OracleKind,
};
pub use metrics::{quality_score, significance_vs_random, topx_accuracy, Choice, Metric, PairSide};
