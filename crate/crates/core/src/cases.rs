//! The 16-case comparison matrix: four models crossed with two error levels
//! and two delays, always under the reference braking perturbation.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ControllerKind, Perturbation, ScenarioConfig};

pub const ERROR_LEVELS: [f64; 2] = [0.03, 0.10];
pub const DELAYS_S: [f64; 2] = [0.1, 0.2];
pub const CASE_COUNT: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unknown case {0}; valid ids are 1 to 16")]
pub struct UnknownCase(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseSpec {
    pub case_id: u8,
    pub model: ControllerKind,
    pub error_fraction: f64,
    pub delay_s: f64,
}

impl CaseSpec {
    /// Ids run model-major: 1–4 FM, 5–8 BCM, 9–12 MBCM, 13–16 PBCM. Within
    /// a model: (3%, 0.1 s), (3%, 0.2 s), (10%, 0.1 s), (10%, 0.2 s).
    pub fn get(id: u32) -> Result<Self, UnknownCase> {
        if !(1..=u32::from(CASE_COUNT)).contains(&id) {
            return Err(UnknownCase(id));
        }
        let k = (id - 1) as usize;
        Ok(Self {
            case_id: id as u8,
            model: ControllerKind::ALL[k / 4],
            error_fraction: ERROR_LEVELS[(k % 4) / 2],
            delay_s: DELAYS_S[k % 2],
        })
    }

    pub fn all() -> Vec<Self> {
        (1..=u32::from(CASE_COUNT))
            .map(|id| Self::get(id).expect("id in range"))
            .collect()
    }

    /// Ticks of delay at step `dt`.
    pub fn delay_ticks(&self, dt: f64) -> usize {
        (self.delay_s / dt).round() as usize
    }

    /// Index of the (error, delay) cell, 0–3, shared by the four models.
    pub fn cell(&self) -> usize {
        (usize::from(self.case_id) - 1) % 4
    }

    /// Writes this row's model, error and delay into `base`, and restores
    /// the reference perturbation.
    pub fn configure(&self, mut base: ScenarioConfig) -> ScenarioConfig {
        base.controller = self.model;
        base.error_fraction = self.error_fraction;
        base.delay_ticks = self.delay_ticks(base.dt);
        base.perturbation = Some(Perturbation::reference_braking());
        base
    }

    pub fn scenario(&self, seed: u64) -> ScenarioConfig {
        let mut cfg = self.configure(ScenarioConfig::default());
        cfg.rng_seed = seed;
        cfg
    }
}
