//! Longitudinal control laws. All functions are pure and return unclamped
//! accelerations; the engine applies [`clamp`].

use thiserror::Error;

use crate::linalg::StateVector2;
use crate::model::{ControllerGains, RelativeState};

/// Comfort limit on commanded acceleration, m/s².
pub const COMFORT_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("multi-node decision needs at least one neighbor")]
    EmptyNeighborList,
}

/// Cruise term: pulls the own velocity toward `v_des`.
fn cruise(own_velocity: f64, gains: &ControllerGains) -> f64 {
    -gains.k_c * (own_velocity - gains.v_des)
}

/// Vehicle-following law: reacts to the preceding vehicle only.
pub fn fm_decision(front: RelativeState, own_velocity: f64, gains: &ControllerGains) -> f64 {
    gains.k_d * (front.rel_position - gains.p_des)
        + gains.k_v * front.rel_velocity
        + cruise(own_velocity, gains)
}

/// Bilateral law. `front` is the `(i, i-1)` pair, `rear` the `(i+1, i)` pair.
pub fn bcm_decision(
    front: RelativeState,
    rear: RelativeState,
    own_velocity: f64,
    gains: &ControllerGains,
) -> f64 {
    gains.k_d * (front.rel_position - rear.rel_position)
        + gains.k_v * (front.rel_velocity - rear.rel_velocity)
        + cruise(own_velocity, gains)
}

/// A weighted neighbor for the multi-node law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Positive: vehicles ahead, negative: vehicles behind.
    pub offset: i32,
    /// Relative state spanning `|offset|` gaps, oriented front minus rear
    /// exactly like the pairs used by [`bcm_decision`].
    pub state: RelativeState,
    pub weight: f64,
}

/// Multi-node bilateral law.
///
/// Each neighbor contributes its relative state averaged per spanned gap, so
/// the `(+1, 1), (-1, -1)` pattern is exactly [`bcm_decision`] and any
/// pattern whose front and rear weights cancel vanishes on a uniform string.
pub fn mbcm_decision(
    neighbors: &[Neighbor],
    own_velocity: f64,
    gains: &ControllerGains,
) -> Result<f64, ControlError> {
    if neighbors.is_empty() {
        return Err(ControlError::EmptyNeighborList);
    }
    // Accumulate before applying the gains so unit weights at span 1
    // reproduce the bilateral law bit for bit.
    let (mut p, mut v) = (0.0, 0.0);
    for n in neighbors {
        let span = f64::from(n.offset.unsigned_abs());
        p += n.weight * (n.state.rel_position / span);
        v += n.weight * (n.state.rel_velocity / span);
    }
    Ok(gains.k_d * p + gains.k_v * v + cruise(own_velocity, gains))
}

/// Bilateral law evaluated on predicted relative states and predicted own
/// velocity.
pub fn pbcm_decision(
    front_pred: StateVector2,
    rear_pred: StateVector2,
    own_velocity_pred: f64,
    gains: &ControllerGains,
) -> f64 {
    bcm_decision(front_pred.into(), rear_pred.into(), own_velocity_pred, gains)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRole {
    Lead,
    Tail,
}

/// The lead vehicle cruises at constant velocity; the tail has no
/// successor and falls back to the following law.
pub fn boundary_decision(
    role: BoundaryRole,
    front: Option<RelativeState>,
    own_velocity: f64,
    gains: &ControllerGains,
) -> f64 {
    match (role, front) {
        (BoundaryRole::Lead, _) => 0.0,
        (BoundaryRole::Tail, Some(front)) => fm_decision(front, own_velocity, gains),
        (BoundaryRole::Tail, None) => 0.0,
    }
}

/// Inputs of one bilateral decision: lead has no `front`, tail no `rear`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionInput {
    pub front: Option<RelativeState>,
    pub rear: Option<RelativeState>,
    pub own_velocity: f64,
    pub gains: ControllerGains,
}

impl DecisionInput {
    /// Three-branch case split: lead, interior, tail.
    pub fn bilateral(&self) -> f64 {
        match (self.front, self.rear) {
            (None, _) => boundary_decision(BoundaryRole::Lead, None, self.own_velocity, &self.gains),
            (Some(front), Some(rear)) => bcm_decision(front, rear, self.own_velocity, &self.gains),
            (Some(front), None) => {
                boundary_decision(BoundaryRole::Tail, Some(front), self.own_velocity, &self.gains)
            }
        }
    }

    /// Following law for every vehicle except the lead.
    pub fn following(&self) -> f64 {
        match self.front {
            None => 0.0,
            Some(front) => fm_decision(front, self.own_velocity, &self.gains),
        }
    }
}

/// Limits `a` to `[-3, 3]` m/s².
pub fn clamp(a: f64) -> f64 {
    clamp_to(a, COMFORT_LIMIT)
}

pub fn clamp_to(a: f64, limit: f64) -> f64 {
    a.clamp(-limit, limit)
}
