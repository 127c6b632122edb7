//! Config-driven experiment runner: distance, WDM and stability sweeps over
//! the full transmit / link / receive chain, plus delay calibration.

mod config;
mod output;
mod pipeline;
mod sweeps;

pub use config::{
    config_hash, load_config, ExperimentConfig, OutputConfig, RunConfig, RxConfig, TxConfig, ENV_PREFIX,
    SCHEMA_VERSION,
};
pub use output::{emit_outputs, read_report, OutputPaths};
pub use pipeline::{simulate_point, PointResult, PointSpec};
pub use sweeps::{
    run_calibration, run_distance_sweep, run_stability_sweep, run_wdm_sweep, CalibrationReport, DistanceFit,
    PointFailure, StabilityStats, SweepKind, SweepReport,
};
