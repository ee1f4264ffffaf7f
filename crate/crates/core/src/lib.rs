//! Single-lane vehicle string simulator with following (FM), bilateral
//! (BCM), multi-node bilateral (MBCM) and predictive bilateral (PBCM)
//! longitudinal control, measurement noise, transport delay and a metrics
//! pipeline for stability experiments.

pub mod cases;
pub mod controllers;
pub mod estimation;
pub mod export;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod runner;
pub mod scenario;
pub mod simulation;

pub use linalg::{Matrix2, StateVector2};
pub use model::{
    validate_config, ConfigError, ControllerGains, ControllerKind, RelativeState, ScenarioConfig,
    ValidatedConfig, VehicleState,
};
pub use simulation::{run_scenario, RunRecord, SimError};
