use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::StateVector2;
use crate::model::{NoiseModel, RelativeState, NOMINAL_GAP, NOMINAL_SPEED};

/// Onboard sensors that produce noisy readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Sensor {
    /// Range/range-rate radar looking at the preceding vehicle.
    FrontRadar = 0,
}

const SENSOR_SLOTS: u64 = 4;

/// Seeded measurement error source with one independent ChaCha stream per
/// vehicle, sensor and state component.
#[derive(Debug, Clone)]
pub struct NoiseInjector {
    error_fraction: f64,
    model: NoiseModel,
    streams: Vec<ChaCha8Rng>,
}

impl NoiseInjector {
    pub fn new(error_fraction: f64, model: NoiseModel, seed: u64, n_vehicles: usize) -> Self {
        let streams = (0..n_vehicles as u64 * SENSOR_SLOTS * 2)
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id);
                rng
            })
            .collect();
        Self {
            error_fraction,
            model,
            streams,
        }
    }

    pub fn error_fraction(&self) -> f64 {
        self.error_fraction
    }

    fn draw(&mut self, vehicle: usize, sensor: Sensor, component: u64) -> f64 {
        let id = ((vehicle as u64 * SENSOR_SLOTS + sensor as u64) * 2 + component) as usize;
        StandardNormal.sample(&mut self.streams[id])
    }

    fn perturb(&self, value: f64, scale: f64, z: f64) -> f64 {
        match self.model {
            NoiseModel::Multiplicative => value * (1.0 + self.error_fraction * z),
            NoiseModel::Additive => value + self.error_fraction * scale * z,
        }
    }

    /// Noisy reading of `truth` by `sensor` on vehicle `vehicle` (0-based).
    /// With a zero error fraction the reading equals the truth exactly.
    pub fn measure(&mut self, truth: RelativeState, vehicle: usize, sensor: Sensor) -> StateVector2 {
        let zp = self.draw(vehicle, sensor, 0);
        let zv = self.draw(vehicle, sensor, 1);
        StateVector2::new(
            self.perturb(truth.rel_position, NOMINAL_GAP, zp),
            self.perturb(truth.rel_velocity, NOMINAL_SPEED, zv),
        )
    }
}
