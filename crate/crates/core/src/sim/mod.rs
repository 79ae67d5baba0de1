//! Truth simulation, scenario orchestration and error metrics.

pub mod benchmark;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod signal;
pub mod truth;

pub use metrics::rmse;
pub use scenario::{
    run_scenario, run_seed, EstimateSeries, EstimatorKind, ObserverGainSpec, RmseRow,
    ScenarioConfig, ScenarioResult, SeedRun,
};
pub use signal::SignalSpec;
pub use truth::{generate_truth, Truth};
