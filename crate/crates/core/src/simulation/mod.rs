//! Deterministic fixed-step engine for a single-lane vehicle string.
//!
//! Vehicles are indexed from the lead (0-based internally, 1-based in every
//! user-facing surface). All vehicles decide synchronously from the same
//! delayed snapshot, so results do not depend on visiting order.

mod delay;
mod engine;
mod noise;
mod record;

pub use delay::DelayLine;
pub use engine::{run_scenario, SimError, Simulation, Snapshot};
pub use noise::{NoiseInjector, Sensor};
pub use record::{Collision, PairLog, RunRecord, TickRecord};
