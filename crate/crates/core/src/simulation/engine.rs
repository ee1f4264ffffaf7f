use std::sync::Arc;

use thiserror::Error;

use super::delay::DelayLine;
use super::noise::{NoiseInjector, Sensor};
use super::record::{Collision, PairLog, RunRecord, TickRecord};
use crate::controllers::{
    bcm_decision, clamp_to, fm_decision, mbcm_decision, pbcm_decision, ControlError, Neighbor,
};
use crate::estimation::{predict_own_velocity, EstimationError, PairFilter};
use crate::linalg::StateVector2;
use crate::model::{ControllerKind, RelativeState, ValidatedConfig, VehicleState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("collision at t = {:.1} s: vehicle {} is {:.3} m behind its predecessor", .collision.time, .collision.vehicle_index, .collision.spacing)]
    Collision {
        collision: Collision,
        record: Box<RunRecord>,
    },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Everything one tick of sensing and V2V traffic makes available. Every
/// vehicle sees the same snapshot after the transport delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tick: usize,
    /// Measured relative state of pair `k` (vehicle `k` ahead of `k + 1`),
    /// taken by the rear vehicle's radar and shared with the front vehicle.
    pub pairs: Vec<StateVector2>,
    /// Accelerations applied over the tick before `tick`.
    pub accelerations: Vec<f64>,
    pub velocities: Vec<f64>,
}

/// Fixed-step simulation of one vehicle string.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ValidatedConfig,
    tick: usize,
    state: Vec<VehicleState>,
    noise: NoiseInjector,
    line: DelayLine<Arc<Snapshot>>,
    relay: DelayLine<Arc<Snapshot>>,
    filters: Vec<PairFilter>,
    fused_tick: Option<usize>,
    pair_logs: Vec<PairLog>,
    record: Vec<TickRecord>,
}

impl Simulation {
    pub fn new(cfg: &ValidatedConfig) -> Self {
        let n = cfg.n_vehicles;
        let state = (0..n)
            .map(|i| VehicleState {
                position: (n - 1 - i) as f64 * cfg.initial_spacing,
                velocity: cfg.initial_velocity,
                acceleration: 0.0,
            })
            .collect();
        let filters = if cfg.controller == ControllerKind::Pbcm {
            (0..n - 1)
                .map(|_| {
                    PairFilter::new(cfg.dt, cfg.kalman.q, cfg.measurement_noise(), cfg.kalman.p0)
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            cfg: cfg.clone(),
            tick: 0,
            state,
            noise: NoiseInjector::new(cfg.error_fraction, cfg.noise_model, cfg.rng_seed, n),
            line: DelayLine::new(cfg.delay_ticks),
            relay: DelayLine::new(cfg.delay_ticks + 1),
            filters,
            fused_tick: None,
            pair_logs: Vec::new(),
            record: Vec::with_capacity(cfg.ticks()),
        }
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.cfg.ticks()
    }

    pub fn state(&self) -> &[VehicleState] {
        &self.state
    }

    pub fn filters(&self) -> &[PairFilter] {
        &self.filters
    }

    pub fn record(&self) -> &[TickRecord] {
        &self.record
    }

    fn sense(&mut self, tick: usize) -> Snapshot {
        let pairs = (0..self.state.len() - 1)
            .map(|k| {
                let truth = RelativeState::between(&self.state[k], &self.state[k + 1]);
                self.noise.measure(truth, k + 1, Sensor::FrontRadar)
            })
            .collect();
        let accelerations = match self.record.last() {
            Some(prev) => prev.vehicles.iter().map(|v| v.acceleration).collect(),
            None => vec![0.0; self.state.len()],
        };
        Snapshot {
            tick,
            pairs,
            accelerations,
            velocities: self.state.iter().map(|v| v.velocity).collect(),
        }
    }

    fn update_filters(&mut self, view: &Snapshot) -> Result<(), EstimationError> {
        if self.fused_tick == Some(view.tick) {
            return Ok(());
        }
        let mut logs = Vec::with_capacity(self.filters.len());
        for (k, filter) in self.filters.iter_mut().enumerate() {
            if filter.estimate().is_some() {
                let a_rel = view.accelerations[k] - view.accelerations[k + 1];
                filter.advance(a_rel)?;
            }
            let measured = view.pairs[k];
            let predicted = filter.prediction().unwrap_or(measured);
            let estimated = filter.best_estimate(measured);
            logs.push(PairLog {
                sample_tick: view.tick,
                measured,
                predicted,
                estimated,
            });
        }
        self.fused_tick = Some(view.tick);
        self.pair_logs = logs;
        Ok(())
    }

    /// Accelerations vehicle `i` applied from `from` up to the current tick.
    fn own_accelerations(&self, i: usize, from: usize) -> impl Iterator<Item = f64> + '_ {
        self.record[from..self.tick]
            .iter()
            .map(move |r| r.vehicles[i].acceleration)
    }

    /// Pair `k` estimate carried forward from its sample tick to now. The
    /// rear member of the pair is `k + 1`; `own` says which member is
    /// doing the predicting, the other one's acceleration is held at its
    /// last reported value.
    fn predicted_pair(&self, k: usize, own: usize, view: &Snapshot) -> StateVector2 {
        let filter = &self.filters[k];
        let estimate = filter.estimate().unwrap_or(view.pairs[k]);
        let own_is_rear = own == k + 1;
        let other = if own_is_rear { k } else { k + 1 };
        let held = view.accelerations[other];
        let steps = self.own_accelerations(own, view.tick).map(|a_own| {
            if own_is_rear {
                held - a_own
            } else {
                a_own - held
            }
        });
        filter.extrapolate(estimate, steps)
    }

    fn predicted_own_velocity(&self, i: usize, view: &Snapshot) -> f64 {
        let dt = self.cfg.dt;
        self.own_accelerations(i, view.tick)
            .fold(view.velocities[i], |v, a| predict_own_velocity(v, a, dt))
    }

    fn mbcm_neighbors(&self, i: usize, view: &Snapshot, relay: &Snapshot) -> Vec<Neighbor> {
        let n_pairs = view.pairs.len();
        let span_state = |first_pair: usize, span: usize| -> Option<RelativeState> {
            // `first_pair` is the pair adjacent to vehicle `i`; farther pairs
            // arrive relayed through the neighbors.
            let mut sum = view.pairs[first_pair];
            for hop in 1..span {
                let k = if first_pair < i {
                    first_pair.checked_sub(hop)?
                } else {
                    let k = first_pair + hop;
                    if k >= n_pairs {
                        return None;
                    }
                    k
                };
                sum = sum + relay.pairs[k];
            }
            Some(sum.into())
        };
        let weights = &self.cfg.mbcm_weights;
        let mut available: Vec<Neighbor> = weights
            .iter()
            .filter_map(|w| {
                let span = w.offset.unsigned_abs() as usize;
                let state = if w.offset > 0 {
                    span_state(i - 1, span)?
                } else {
                    if i >= n_pairs {
                        return None;
                    }
                    span_state(i, span)?
                };
                Some(Neighbor {
                    offset: w.offset,
                    state,
                    weight: w.weight,
                })
            })
            .collect();
        // Keep each side's total weight when far neighbors do not exist.
        for ahead in [true, false] {
            let side = |o: i32| (o > 0) == ahead;
            let configured: f64 = weights.iter().filter(|w| side(w.offset)).map(|w| w.weight).sum();
            let present: f64 = available.iter().filter(|w| side(w.offset)).map(|w| w.weight).sum();
            if present != 0.0 && present != configured {
                let scale = configured / present;
                available
                    .iter_mut()
                    .filter(|w| side(w.offset))
                    .for_each(|w| w.weight *= scale);
            }
        }
        available
    }

    fn decide(&self, i: usize, view: &Snapshot, relay: &Snapshot) -> Result<f64, ControlError> {
        let n = self.state.len();
        if i == 0 {
            return Ok(0.0);
        }
        let gains = &self.cfg.gains;
        let front: RelativeState = view.pairs[i - 1].into();
        let velocity = view.velocities[i];
        let is_tail = i == n - 1;
        let kind = if self.tick < self.cfg.warmup_ticks() {
            ControllerKind::Fm
        } else {
            self.cfg.controller
        };
        let decision = match kind {
            ControllerKind::Fm => fm_decision(front, velocity, gains),
            ControllerKind::Bcm if is_tail => fm_decision(front, velocity, gains),
            ControllerKind::Bcm => bcm_decision(front, view.pairs[i].into(), velocity, gains),
            ControllerKind::Mbcm if is_tail => fm_decision(front, velocity, gains),
            ControllerKind::Mbcm => {
                let neighbors = self.mbcm_neighbors(i, view, relay);
                mbcm_decision(&neighbors, velocity, gains)?
            }
            ControllerKind::Pbcm => {
                let own_velocity = self.predicted_own_velocity(i, view);
                let front = self.predicted_pair(i - 1, i, view);
                if is_tail {
                    fm_decision(front.into(), own_velocity, gains)
                } else {
                    let rear = self.predicted_pair(i, i, view);
                    pbcm_decision(front, rear, own_velocity, gains)
                }
            }
        };
        Ok(decision)
    }

    /// Commanded accelerations for every vehicle from the delayed views.
    /// Each decision reads only the shared snapshot, so the order the
    /// vehicles are visited in does not matter.
    pub fn decisions(&self, order: impl IntoIterator<Item = usize>) -> Result<Vec<f64>, SimError> {
        let (_, view) = self.line.delayed_view(self.tick).expect("sensed before deciding");
        let (_, relay) = self.relay.delayed_view(self.tick).expect("sensed before deciding");
        let mut out = vec![0.0; self.state.len()];
        for i in order {
            out[i] = self.decide(i, view, relay)?;
        }
        Ok(out)
    }

    fn sense_and_fuse(&mut self) -> Result<(), SimError> {
        let t = self.tick;
        let snapshot = Arc::new(self.sense(t));
        self.line.push(t, Arc::clone(&snapshot));
        self.relay.push(t, snapshot);
        if !self.filters.is_empty() {
            let (_, view) = self.line.delayed_view(t).expect("just pushed");
            let view = Arc::clone(view);
            self.update_filters(&view)?;
        }
        Ok(())
    }

    /// Advances the string by one tick: sense, fuse, decide, clamp,
    /// override, integrate and check spacing.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.tick;
        let dt = self.cfg.dt;
        let time = t as f64 * dt;
        self.sense_and_fuse()?;
        let decisions = self.decisions(0..self.state.len())?;

        let limit = self.cfg.max_acceleration;
        let perturbation = self.cfg.perturbation.filter(|p| p.is_active(time));
        for (i, (vehicle, &decision)) in self.state.iter_mut().zip(&decisions).enumerate() {
            let mut a = clamp_to(decision, limit);
            if let Some(p) = perturbation.filter(|p| p.vehicle_index == i + 1) {
                a = clamp_to(p.acceleration, limit);
            }
            // No reversing: stop exactly at zero velocity within the tick.
            vehicle.acceleration = a.max(-vehicle.velocity / dt);
        }

        let pairs = (!self.filters.is_empty()).then(|| self.pair_logs.clone());
        self.record.push(TickRecord {
            tick: t,
            time,
            vehicles: self.state.clone(),
            decisions,
            pairs,
        });

        for v in &mut self.state {
            v.position += v.velocity * dt + 0.5 * v.acceleration * dt * dt;
            v.velocity = (v.velocity + v.acceleration * dt).max(0.0);
        }
        self.tick += 1;

        let length = self.cfg.vehicle_length;
        let crash = self
            .state
            .windows(2)
            .enumerate()
            .map(|(k, w)| (k, w[0].position - w[1].position))
            .find(|&(_, spacing)| spacing <= length);
        if let Some((k, spacing)) = crash {
            let collision = Collision {
                tick: self.tick,
                time: self.tick as f64 * dt,
                vehicle_index: k + 2,
                spacing,
            };
            let record = self.snapshot_record(Some(collision));
            return Err(SimError::Collision {
                collision,
                record: Box::new(record),
            });
        }
        Ok(())
    }

    /// Moves the ticks recorded so far out; the simulation cannot continue.
    fn snapshot_record(&mut self, collision: Option<Collision>) -> RunRecord {
        RunRecord {
            config: self.cfg.clone(),
            ticks: std::mem::take(&mut self.record),
            final_state: self.state.clone(),
            collision,
        }
    }

    pub fn into_record(self) -> RunRecord {
        RunRecord {
            config: self.cfg,
            ticks: self.record,
            final_state: self.state,
            collision: None,
        }
    }
}

/// Runs a validated scenario to completion. Same config and seed give a
/// bit-identical record.
pub fn run_scenario(cfg: &ValidatedConfig) -> Result<RunRecord, SimError> {
    let mut sim = Simulation::new(cfg);
    while !sim.is_finished() {
        sim.step()?;
    }
    Ok(sim.into_record())
}
