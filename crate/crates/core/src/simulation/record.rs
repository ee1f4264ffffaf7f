use serde::Serialize;

use crate::linalg::StateVector2;
use crate::model::{RelativeState, ValidatedConfig, VehicleState};

/// Filter log for one tracked pair at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLog {
    /// Tick the fused measurement was taken at (lags the current tick by
    /// the transport delay).
    pub sample_tick: usize,
    pub measured: StateVector2,
    /// Prior the measurement was fused with; equals `measured` on the
    /// bootstrap tick.
    pub predicted: StateVector2,
    pub estimated: StateVector2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub time: f64,
    /// True state at the start of the tick. `acceleration` is what the
    /// vehicle applied over `[t, t + dt]`.
    pub vehicles: Vec<VehicleState>,
    /// Commanded acceleration before clamping and overrides.
    pub decisions: Vec<f64>,
    /// Pair `k` joins vehicle `k` (front) and `k + 1` (rear), 0-based.
    /// Present for the predictive controller only.
    pub pairs: Option<Vec<PairLog>>,
}

impl TickRecord {
    /// Center-to-center distances, front pair first.
    pub fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        self.vehicles
            .windows(2)
            .map(|w| w[0].position - w[1].position)
    }

    pub fn relative_state(&self, pair: usize) -> RelativeState {
        RelativeState::between(&self.vehicles[pair], &self.vehicles[pair + 1])
    }
}

/// A vehicle pair came within one vehicle length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Collision {
    /// Tick at which the overlapping state was reached.
    pub tick: usize,
    pub time: f64,
    /// 1-based index of the rear vehicle of the pair.
    pub vehicle_index: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ValidatedConfig,
    pub ticks: Vec<TickRecord>,
    /// State after the last simulated tick.
    pub final_state: Vec<VehicleState>,
    pub collision: Option<Collision>,
}

impl RunRecord {
    pub fn n_vehicles(&self) -> usize {
        self.config.n_vehicles
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.collision.is_none() && self.ticks.len() == self.config.ticks()
    }

    /// Record entry closest to `time` seconds, if it was reached.
    pub fn at_time(&self, time: f64) -> Option<&TickRecord> {
        let tick = (time / self.dt()).round() as usize;
        self.ticks.get(tick)
    }

    pub fn last(&self) -> Option<&TickRecord> {
        self.ticks.last()
    }
}
