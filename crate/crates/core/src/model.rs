//! Domain types shared by the controllers, the estimator, the engine and the
//! metrics pipeline, plus scenario validation.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix2, StateVector2, COVARIANCE_TOLERANCE};

/// Smallest admissible tick: the sum of communication and system delay is at
/// least 60 ms, and one control step has to cover it.
pub const MIN_DT: f64 = 0.06;

/// Upper end of the relative measurement error range.
pub const MAX_ERROR_FRACTION: f64 = 0.10;

/// Nominal relative-position scale used to turn an error fraction into a
/// measurement covariance.
pub const NOMINAL_GAP: f64 = 37.5;

/// Nominal relative-velocity scale, see [`NOMINAL_GAP`].
pub const NOMINAL_SPEED: f64 = 30.0;

const TICK_TOLERANCE: f64 = 1e-9;

/// Absolute kinematic state of one vehicle at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl VehicleState {
    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.acceleration.is_finite()
    }
}

/// State of the front member of a pair relative to the rear member.
///
/// For the pair `(i, i-1)` this is `p[i-1] - p[i]` and `v[i-1] - v[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeState {
    pub rel_position: f64,
    pub rel_velocity: f64,
}

impl RelativeState {
    pub const fn new(rel_position: f64, rel_velocity: f64) -> Self {
        Self {
            rel_position,
            rel_velocity,
        }
    }

    /// Relative state of `front` as seen from `rear`.
    pub fn between(front: &VehicleState, rear: &VehicleState) -> Self {
        Self::new(front.position - rear.position, front.velocity - rear.velocity)
    }

    pub fn is_finite(&self) -> bool {
        self.rel_position.is_finite() && self.rel_velocity.is_finite()
    }
}

impl From<StateVector2> for RelativeState {
    fn from(v: StateVector2) -> Self {
        Self::new(v.position, v.velocity)
    }
}

impl From<RelativeState> for StateVector2 {
    fn from(r: RelativeState) -> Self {
        StateVector2::new(r.rel_position, r.rel_velocity)
    }
}

/// Feedback gains of the linear control laws.
///
/// Gains are stored as positive magnitudes. The cruise term always pulls the
/// own velocity toward `v_des`; the sign is applied inside the control laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Distance gain, 1/s².
    pub k_d: f64,
    /// Relative velocity gain, 1/s.
    pub k_v: f64,
    /// Cruise gain, 1/s.
    pub k_c: f64,
    /// Desired velocity, m/s.
    pub v_des: f64,
    /// Desired center-to-center spacing, m.
    pub p_des: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_d: 0.1391,
            k_v: 1.6389,
            k_c: 0.0025,
            v_des: 30.0,
            p_des: 37.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Fm,
    Bcm,
    Mbcm,
    Pbcm,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [Self::Fm, Self::Bcm, Self::Mbcm, Self::Pbcm];

    pub fn label(self) -> &'static str {
        match self {
            Self::Fm => "FM",
            Self::Bcm => "BCM",
            Self::Mbcm => "MBCM",
            Self::Pbcm => "PBCM",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One entry of the multi-node neighbor pattern. Positive offsets look ahead
/// (toward the lead vehicle), negative offsets look behind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborWeight {
    pub offset: i32,
    pub weight: f64,
}

/// The default 2-ahead / 2-behind pattern, normalized so the front weights
/// sum to 1 and the rear weights to -1.
pub fn default_mbcm_weights() -> Vec<NeighborWeight> {
    let raw = [(2, 0.5), (1, 1.0), (-1, -1.0), (-2, -0.5)];
    let front: f64 = raw.iter().filter(|(o, _)| *o > 0).map(|(_, w)| w).sum();
    let rear: f64 = raw.iter().filter(|(o, _)| *o < 0).map(|(_, w)| -w).sum();
    raw.iter()
        .map(|&(offset, weight)| NeighborWeight {
            offset,
            weight: if offset > 0 { weight / front } else { weight / rear },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// Each component is scaled by `1 + e·z`.
    Multiplicative,
    /// Each component is shifted by `e·scale·z` with the nominal gap/speed scales.
    #[default]
    Additive,
}

/// Forced acceleration applied to one vehicle over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// 1-based index, vehicle 1 leads.
    pub vehicle_index: usize,
    pub start_time: f64,
    pub duration: f64,
    pub acceleration: f64,
}

impl Perturbation {
    /// Vehicle 5 brakes at -3 m/s² for 2 s starting at 10 s.
    pub fn reference_braking() -> Self {
        Self {
            vehicle_index: 5,
            start_time: 10.0,
            duration: 2.0,
            acceleration: -3.0,
        }
    }

    pub fn is_active(&self, time: f64) -> bool {
        time + TICK_TOLERANCE >= self.start_time
            && time + TICK_TOLERANCE < self.start_time + self.duration
    }
}

/// Kalman filter tuning for the pair filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanSettings {
    /// Per-tick process noise.
    pub q: Matrix2,
    /// Measurement covariance. Derived from the error fraction when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Matrix2>,
    /// Initial estimate covariance.
    pub p0: Matrix2,
}

impl Default for KalmanSettings {
    fn default() -> Self {
        Self {
            q: Matrix2::diag(1.88e-4, 1.88e-4),
            r: None,
            p0: Matrix2::diag(1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    /// m. Used for initial placement only; the road does not wrap.
    pub road_length: f64,
    /// m
    pub vehicle_length: f64,
    /// m, center to center
    pub initial_spacing: f64,
    /// m/s
    pub initial_velocity: f64,
    /// s
    pub dt: f64,
    /// s
    pub total_duration: f64,
    /// Every vehicle runs the following model until this time, s.
    pub warmup_duration: f64,
    /// Comfort limit on the applied acceleration, m/s².
    pub max_acceleration: f64,
    pub controller: ControllerKind,
    pub gains: ControllerGains,
    pub mbcm_weights: Vec<NeighborWeight>,
    pub error_fraction: f64,
    #[serde(default)]
    pub noise_model: NoiseModel,
    pub delay_ticks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    pub rng_seed: u64,
    pub kalman: KalmanSettings,
}

impl Default for ScenarioConfig {
    /// 40 vehicles on a 1500 m road, 37.5 m apart at 30 m/s, 500 s at
    /// 0.1 s ticks, vehicle 5 braking for 2 s at 10 s.
    fn default() -> Self {
        Self {
            n_vehicles: 40,
            road_length: 1500.0,
            vehicle_length: 5.0,
            initial_spacing: 37.5,
            initial_velocity: 30.0,
            dt: 0.1,
            total_duration: 500.0,
            warmup_duration: 10.0,
            max_acceleration: 3.0,
            controller: ControllerKind::Pbcm,
            gains: ControllerGains::default(),
            mbcm_weights: default_mbcm_weights(),
            error_fraction: 0.10,
            noise_model: NoiseModel::Additive,
            delay_ticks: 1,
            perturbation: Some(Perturbation::reference_braking()),
            rng_seed: 0,
            kalman: KalmanSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("dt = {dt} s is below the minimum tick of {MIN_DT} s")]
    DtTooSmall { dt: f64 },
    #[error("n_vehicles = {0}: at least two vehicles are needed to form a pair")]
    TooFewVehicles(usize),
    #[error("{n} vehicles spaced {spacing} m apart do not fit on a {road} m road")]
    FleetOverflow { n: usize, spacing: f64, road: f64 },
    #[error("perturbation.vehicle_index = {index} is outside 1..={n}")]
    BadIndex { index: usize, n: usize },
    #[error("kalman.{field} is not a symmetric positive semidefinite matrix")]
    NonPsdCovariance { field: &'static str },
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("{field} = {value} is out of range: {expected}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("total_duration / dt is not an integer number of ticks")]
    FractionalTicks,
    #[error("mbcm_weights: {0}")]
    BadNeighborPattern(&'static str),
}

/// A [`ScenarioConfig`] that passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: ScenarioConfig,
    ticks: usize,
    warmup_ticks: usize,
    measurement_noise: Matrix2,
}

impl Deref for ValidatedConfig {
    type Target = ScenarioConfig;

    fn deref(&self) -> &ScenarioConfig {
        &self.config
    }
}

impl ValidatedConfig {
    /// Number of simulated ticks after the initial state.
    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn warmup_ticks(&self) -> usize {
        self.warmup_ticks
    }

    /// The measurement covariance `R` the pair filters use.
    pub fn measurement_noise(&self) -> Matrix2 {
        self.measurement_noise
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn into_inner(self) -> ScenarioConfig {
        self.config
    }
}

fn finite(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NonFinite { field })
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    finite(field, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            value,
            expected: "> 0",
        })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<(), ConfigError> {
    finite(field, value)?;
    if value >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            value,
            expected: ">= 0",
        })
    }
}

fn whole_ticks(span: f64, dt: f64) -> Result<usize, ConfigError> {
    let ratio = span / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > TICK_TOLERANCE * rounded.max(1.0) {
        return Err(ConfigError::FractionalTicks);
    }
    Ok(rounded as usize)
}

/// Checks every range and consistency constraint of a scenario.
pub fn validate_config(cfg: &ScenarioConfig) -> Result<ValidatedConfig, ConfigError> {
    finite("dt", cfg.dt)?;
    if cfg.dt < MIN_DT {
        return Err(ConfigError::DtTooSmall { dt: cfg.dt });
    }
    if cfg.n_vehicles < 2 {
        return Err(ConfigError::TooFewVehicles(cfg.n_vehicles));
    }
    positive("road_length", cfg.road_length)?;
    positive("vehicle_length", cfg.vehicle_length)?;
    positive("initial_spacing", cfg.initial_spacing)?;
    non_negative("initial_velocity", cfg.initial_velocity)?;
    positive("total_duration", cfg.total_duration)?;
    non_negative("warmup_duration", cfg.warmup_duration)?;
    positive("max_acceleration", cfg.max_acceleration)?;

    if cfg.initial_spacing <= cfg.vehicle_length {
        return Err(ConfigError::OutOfRange {
            field: "initial_spacing",
            value: cfg.initial_spacing,
            expected: "> vehicle_length",
        });
    }
    if cfg.initial_spacing * (cfg.n_vehicles - 1) as f64 > cfg.road_length + TICK_TOLERANCE {
        return Err(ConfigError::FleetOverflow {
            n: cfg.n_vehicles,
            spacing: cfg.initial_spacing,
            road: cfg.road_length,
        });
    }

    let g = &cfg.gains;
    positive("gains.k_d", g.k_d)?;
    positive("gains.k_v", g.k_v)?;
    non_negative("gains.k_c", g.k_c)?;
    non_negative("gains.v_des", g.v_des)?;
    finite("gains.p_des", g.p_des)?;
    if g.p_des <= cfg.vehicle_length {
        return Err(ConfigError::OutOfRange {
            field: "gains.p_des",
            value: g.p_des,
            expected: "> vehicle_length",
        });
    }

    if cfg.mbcm_weights.is_empty() {
        return Err(ConfigError::BadNeighborPattern("empty"));
    }
    for w in &cfg.mbcm_weights {
        finite("mbcm_weights.weight", w.weight)?;
        if w.offset == 0 {
            return Err(ConfigError::BadNeighborPattern("offset 0 is the vehicle itself"));
        }
    }

    finite("error_fraction", cfg.error_fraction)?;
    if !(0.0..=MAX_ERROR_FRACTION).contains(&cfg.error_fraction) {
        return Err(ConfigError::OutOfRange {
            field: "error_fraction",
            value: cfg.error_fraction,
            expected: "within [0, 0.10]",
        });
    }

    if let Some(p) = &cfg.perturbation {
        if p.vehicle_index < 1 || p.vehicle_index > cfg.n_vehicles {
            return Err(ConfigError::BadIndex {
                index: p.vehicle_index,
                n: cfg.n_vehicles,
            });
        }
        non_negative("perturbation.start_time", p.start_time)?;
        non_negative("perturbation.duration", p.duration)?;
        finite("perturbation.acceleration", p.acceleration)?;
    }

    let k = &cfg.kalman;
    if !k.q.is_covariance(COVARIANCE_TOLERANCE) {
        return Err(ConfigError::NonPsdCovariance { field: "q" });
    }
    if !k.p0.is_covariance(COVARIANCE_TOLERANCE) {
        return Err(ConfigError::NonPsdCovariance { field: "p0" });
    }
    let measurement_noise = match k.r {
        Some(r) => r,
        None => derived_measurement_noise(cfg.error_fraction),
    };
    if !measurement_noise.is_covariance(COVARIANCE_TOLERANCE) {
        return Err(ConfigError::NonPsdCovariance { field: "r" });
    }

    let ticks = whole_ticks(cfg.total_duration, cfg.dt)?;
    let warmup_ticks = (cfg.warmup_duration / cfg.dt).round() as usize;

    Ok(ValidatedConfig {
        config: cfg.clone(),
        ticks,
        warmup_ticks,
        measurement_noise,
    })
}

/// `diag((e·37.5)², (e·30)²)`
pub fn derived_measurement_noise(error_fraction: f64) -> Matrix2 {
    Matrix2::diag(
        (error_fraction * NOMINAL_GAP).powi(2),
        (error_fraction * NOMINAL_SPEED).powi(2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_is_valid() {
        let v = validate_config(&ScenarioConfig::default()).unwrap();
        assert_eq!(v.ticks(), 5000);
        assert_eq!(v.warmup_ticks(), 100);
        assert_eq!(v.n_vehicles, 40);
    }

    #[test]
    fn dt_below_minimum() {
        let cfg = ScenarioConfig {
            dt: 0.05,
            ..Default::default()
        };
        assert_eq!(
            validate_config(&cfg),
            Err(ConfigError::DtTooSmall { dt: 0.05 })
        );
    }

    #[test]
    fn single_vehicle_rejected() {
        let cfg = ScenarioConfig {
            n_vehicles: 1,
            perturbation: None,
            ..Default::default()
        };
        assert_eq!(validate_config(&cfg), Err(ConfigError::TooFewVehicles(1)));
    }

    #[test]
    fn fleet_must_fit() {
        let cfg = ScenarioConfig {
            n_vehicles: 42,
            ..Default::default()
        };
        assert!(matches!(
            validate_config(&cfg),
            Err(ConfigError::FleetOverflow { n: 42, .. })
        ));
    }

    #[test]
    fn perturbation_index_checked() {
        for index in [0, 41] {
            let cfg = ScenarioConfig {
                perturbation: Some(Perturbation {
                    vehicle_index: index,
                    ..Perturbation::reference_braking()
                }),
                ..Default::default()
            };
            assert_eq!(
                validate_config(&cfg),
                Err(ConfigError::BadIndex { index, n: 40 })
            );
        }
    }

    #[test]
    fn covariances_checked() {
        let mut cfg = ScenarioConfig::default();
        cfg.kalman.q = Matrix2::diag(-1.0, 1.0);
        assert_eq!(
            validate_config(&cfg),
            Err(ConfigError::NonPsdCovariance { field: "q" })
        );
        let mut cfg = ScenarioConfig::default();
        cfg.kalman.r = Some(Matrix2::new(1.0, 0.3, 0.0, 1.0));
        assert_eq!(
            validate_config(&cfg),
            Err(ConfigError::NonPsdCovariance { field: "r" })
        );
        let mut cfg = ScenarioConfig::default();
        cfg.kalman.p0 = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        assert_eq!(
            validate_config(&cfg),
            Err(ConfigError::NonPsdCovariance { field: "p0" })
        );
    }

    #[test]
    fn fractional_tick_count_rejected() {
        let cfg = ScenarioConfig {
            total_duration: 500.05,
            ..Default::default()
        };
        assert_eq!(validate_config(&cfg), Err(ConfigError::FractionalTicks));
    }

    #[test]
    fn error_fraction_range() {
        let cfg = ScenarioConfig {
            error_fraction: 0.2,
            ..Default::default()
        };
        assert!(matches!(
            validate_config(&cfg),
            Err(ConfigError::OutOfRange {
                field: "error_fraction",
                ..
            })
        ));
    }

    #[test]
    fn default_weights_are_normalized() {
        let w = default_mbcm_weights();
        let front: f64 = w.iter().filter(|n| n.offset > 0).map(|n| n.weight).sum();
        let rear: f64 = w.iter().filter(|n| n.offset < 0).map(|n| n.weight).sum();
        assert!((front - 1.0).abs() < 1e-15);
        assert!((rear + 1.0).abs() < 1e-15);
    }

    #[test]
    fn derived_r_scales_with_error() {
        let r = derived_measurement_noise(0.1);
        assert!((r.at(0, 0) - 3.75f64.powi(2)).abs() < 1e-12);
        assert!((r.at(1, 1) - 9.0).abs() < 1e-12);
        assert_eq!(derived_measurement_noise(0.0), Matrix2::ZERO);
    }
}
