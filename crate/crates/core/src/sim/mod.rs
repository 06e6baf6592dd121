//! Discrete-time Monte-Carlo simulation with mode switching, queue caps and
//! performance metrics.

pub mod baseline;
pub mod config;
pub mod engine;
pub mod metrics;

pub use baseline::{baseline_control_step, BaselineKind, BaselineSpec};
pub use config::{DemandOverride, ModePath, SimConfig, RNG_ALGORITHM};
pub use engine::{
    replicate_metrics, run_metrics, run_with, sample_path, simulate, simulate_on, step, Observer,
    Strategy,
};
pub use metrics::{
    density_map, metrics_of, time_avg_queue, vht, HourMetrics, Metrics, MetricsAccumulator,
    StepRecord, Trajectory,
};
