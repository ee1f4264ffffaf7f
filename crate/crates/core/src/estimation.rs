//! Per-pair Kalman estimation and kinematic state prediction.
//!
//! One [`PairFilter`] tracks the relative state of one vehicle pair. A full
//! cycle ([`PairFilter::filter_tick`]) first fuses the incoming measurement
//! with the prediction made on the previous tick, then predicts one tick
//! ahead with the known relative acceleration, and finally prepares the
//! covariance and gain that the next fusion will use.

use thiserror::Error;

use crate::linalg::{Matrix2, StateVector2, COVARIANCE_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EstimationError {
    #[error("innovation covariance is numerically singular")]
    SingularInnovation,
    #[error("propagated covariance is not symmetric positive semidefinite")]
    NonPsdResult,
    #[error("no estimate available to predict from")]
    NoEstimate,
}

/// Constant-acceleration transition over one tick.
pub fn transition(dt: f64) -> Matrix2 {
    Matrix2::new(1.0, dt, 0.0, 1.0)
}

/// Control input column `[dt²/2, dt]`.
pub fn control_input(dt: f64) -> StateVector2 {
    StateVector2::new(0.5 * dt * dt, dt)
}

/// `K = P′Hᵀ(HP′Hᵀ + R)⁻¹`
pub fn kalman_gain(prior: Matrix2, h: Matrix2, r: Matrix2) -> Result<Matrix2, EstimationError> {
    let innovation = h * prior * h.transpose() + r;
    let inv = innovation
        .inverse()
        .ok_or(EstimationError::SingularInnovation)?;
    Ok(prior * h.transpose() * inv)
}

/// Own velocity one step ahead: `v + a·dt`.
pub fn predict_own_velocity(velocity: f64, acceleration: f64, dt: f64) -> f64 {
    velocity + acceleration * dt
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFilter {
    dt: f64,
    f: Matrix2,
    b: StateVector2,
    q: Matrix2,
    r: Matrix2,
    h: Matrix2,
    p0: Matrix2,
    estimate: Option<StateVector2>,
    prediction: Option<StateVector2>,
    covariance: Matrix2,
    prior_covariance: Matrix2,
    gain: Matrix2,
    last_relative_acceleration: f64,
}

impl PairFilter {
    /// A fresh filter with identity observation matrix.
    pub fn new(dt: f64, q: Matrix2, r: Matrix2, p0: Matrix2) -> Self {
        Self::with_observation(dt, q, r, p0, Matrix2::IDENTITY)
    }

    pub fn with_observation(dt: f64, q: Matrix2, r: Matrix2, p0: Matrix2, h: Matrix2) -> Self {
        Self {
            dt,
            f: transition(dt),
            b: control_input(dt),
            q,
            r,
            h,
            p0,
            estimate: None,
            prediction: None,
            covariance: p0,
            prior_covariance: p0,
            gain: Matrix2::ZERO,
            last_relative_acceleration: 0.0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn transition(&self) -> Matrix2 {
        self.f
    }

    pub fn control_input(&self) -> StateVector2 {
        self.b
    }

    pub fn estimate(&self) -> Option<StateVector2> {
        self.estimate
    }

    pub fn prediction(&self) -> Option<StateVector2> {
        self.prediction
    }

    pub fn covariance(&self) -> Matrix2 {
        self.covariance
    }

    pub fn prior_covariance(&self) -> Matrix2 {
        self.prior_covariance
    }

    pub fn gain(&self) -> Matrix2 {
        self.gain
    }

    pub fn last_relative_acceleration(&self) -> f64 {
        self.last_relative_acceleration
    }

    /// Overrides the estimate, for seeding tests and warm starts.
    pub fn set_estimate(&mut self, estimate: StateVector2) {
        self.estimate = Some(estimate);
    }

    /// Overrides the stored gain and prediction, for isolated tests of the
    /// fusion step.
    pub fn set_prediction(&mut self, prediction: StateVector2, gain: Matrix2) {
        self.prediction = Some(prediction);
        self.gain = gain;
    }

    /// Overrides the posterior covariance.
    pub fn set_covariance(&mut self, covariance: Matrix2) {
        self.covariance = covariance;
    }

    pub fn set_prior(&mut self, prior: Matrix2, gain: Matrix2) {
        self.prior_covariance = prior;
        self.gain = gain;
    }

    /// `F·x̃ + B·a`. Pure; does not touch the filter.
    pub fn propagate(&self, state: StateVector2, relative_acceleration: f64) -> StateVector2 {
        self.f * state + self.b.scale(relative_acceleration)
    }

    /// Runs [`Self::propagate`] once per acceleration, in order.
    pub fn extrapolate<I>(&self, state: StateVector2, accelerations: I) -> StateVector2
    where
        I: IntoIterator<Item = f64>,
    {
        accelerations
            .into_iter()
            .fold(state, |s, a| self.propagate(s, a))
    }

    /// One-step state prediction from the current estimate; becomes the
    /// prior for the next fusion.
    pub fn predict_state(&mut self, relative_acceleration: f64) -> Result<StateVector2, EstimationError> {
        let estimate = self.estimate.ok_or(EstimationError::NoEstimate)?;
        let predicted = self.propagate(estimate, relative_acceleration);
        self.prediction = Some(predicted);
        self.last_relative_acceleration = relative_acceleration;
        Ok(predicted)
    }

    /// `P′ = F·P·Fᵀ + Q`, stored as the prior covariance.
    pub fn propagate_covariance(&mut self) -> Result<Matrix2, EstimationError> {
        let prior = (self.f * self.covariance * self.f.transpose() + self.q).symmetrized();
        if !prior.is_covariance(COVARIANCE_TOLERANCE) {
            return Err(EstimationError::NonPsdResult);
        }
        self.prior_covariance = prior;
        Ok(prior)
    }

    /// Computes and stores the gain for the current prior covariance.
    pub fn update_gain(&mut self) -> Result<Matrix2, EstimationError> {
        self.gain = kalman_gain(self.prior_covariance, self.h, self.r)?;
        Ok(self.gain)
    }

    /// `x̃ = x̂ + K(x̄ − H·x̂)`. Without a previous prediction the measurement is
    /// taken as the estimate and the covariance is reset to `P0`.
    pub fn best_estimate(&mut self, measurement: StateVector2) -> StateVector2 {
        let estimate = match self.prediction {
            None => {
                self.covariance = self.p0;
                measurement
            }
            Some(predicted) => {
                let innovation = measurement - self.h * predicted;
                predicted + self.gain * innovation
            }
        };
        self.estimate = Some(estimate);
        estimate
    }

    /// `P = (I − K·H)·P′`, symmetrized and stored.
    pub fn update_covariance(&mut self) -> Matrix2 {
        let posterior = ((Matrix2::IDENTITY - self.gain * self.h) * self.prior_covariance).symmetrized();
        self.covariance = posterior;
        posterior
    }

    /// Time update: predicts the next state and prepares `P′`, `K` and `P`
    /// for the next fusion.
    pub fn advance(&mut self, relative_acceleration: f64) -> Result<StateVector2, EstimationError> {
        let predicted = self.predict_state(relative_acceleration)?;
        self.propagate_covariance()?;
        self.update_gain()?;
        self.update_covariance();
        Ok(predicted)
    }

    /// Full cycle: fuse `measurement`, predict one tick ahead with
    /// `relative_acceleration`, then update covariance and gain.
    pub fn filter_tick(
        &mut self,
        measurement: StateVector2,
        relative_acceleration: f64,
    ) -> Result<(StateVector2, StateVector2), EstimationError> {
        let estimate = self.best_estimate(measurement);
        let predicted = self.advance(relative_acceleration)?;
        Ok((estimate, predicted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter(dt: f64) -> PairFilter {
        PairFilter::new(dt, Matrix2::diag(0.01, 0.01), Matrix2::IDENTITY, Matrix2::IDENTITY)
    }

    fn close(a: StateVector2, b: StateVector2, tol: f64) -> bool {
        (a.position - b.position).abs() <= tol && (a.velocity - b.velocity).abs() <= tol
    }

    #[test]
    fn transition_and_control_are_exact() {
        let f = filter(0.1);
        assert_eq!(f.transition(), Matrix2::new(1.0, 0.1, 0.0, 1.0));
        assert_eq!(f.control_input(), StateVector2::new(0.5 * 0.1 * 0.1, 0.1));
    }

    #[test]
    fn prediction_uniform_motion() {
        let mut f = filter(0.1);
        f.set_estimate(StateVector2::new(0.0, 10.0));
        let p = f.predict_state(0.0).unwrap();
        assert!(close(p, StateVector2::new(1.0, 10.0), 1e-12));
        assert_eq!(f.prediction(), Some(p));
    }

    #[test]
    fn prediction_from_rest() {
        let mut f = filter(0.1);
        f.set_estimate(StateVector2::ZERO);
        let p = f.predict_state(2.0).unwrap();
        assert!(close(p, StateVector2::new(0.01, 0.2), 1e-12));
    }

    #[test]
    fn prediction_matches_scalar_kinematics() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let dt = rng.random_range(0.06..0.5);
            let (p, v, a) = (
                rng.random_range(-50.0..50.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-6.0..6.0),
            );
            let mut f = filter(dt);
            f.set_estimate(StateVector2::new(p, v));
            let got = f.predict_state(a).unwrap();
            let want_p = p + v * dt + a * dt * dt / 2.0;
            let want_v = v + a * dt;
            assert!((got.position - want_p).abs() < 1e-12);
            assert!((got.velocity - want_v).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_needs_estimate() {
        assert_eq!(filter(0.1).predict_state(0.0), Err(EstimationError::NoEstimate));
    }

    #[test]
    fn covariance_from_zero() {
        let mut f = PairFilter::new(0.1, Matrix2::IDENTITY, Matrix2::IDENTITY, Matrix2::ZERO);
        assert_eq!(f.propagate_covariance().unwrap(), Matrix2::IDENTITY);
    }

    #[test]
    fn covariance_from_identity() {
        let mut f = PairFilter::new(0.1, Matrix2::ZERO, Matrix2::IDENTITY, Matrix2::IDENTITY);
        let p = f.propagate_covariance().unwrap();
        assert!((p.at(0, 0) - 1.01).abs() < 1e-12);
        assert!((p.at(0, 1) - 0.1).abs() < 1e-12);
        assert!((p.at(1, 0) - 0.1).abs() < 1e-12);
        assert!((p.at(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_rejects_bad_q() {
        let mut f = PairFilter::new(0.1, Matrix2::diag(-5.0, 0.0), Matrix2::IDENTITY, Matrix2::ZERO);
        assert_eq!(f.propagate_covariance(), Err(EstimationError::NonPsdResult));
    }

    #[test]
    fn gain_limits() {
        let eps = 1e-12;
        let k = kalman_gain(Matrix2::IDENTITY, Matrix2::IDENTITY, Matrix2::diag(eps, eps)).unwrap();
        assert!((k.at(0, 0) - 1.0).abs() < 1e-9 && (k.at(1, 1) - 1.0).abs() < 1e-9);
        assert!(k.at(0, 1).abs() < 1e-9 && k.at(1, 0).abs() < 1e-9);

        let k = kalman_gain(Matrix2::ZERO, Matrix2::IDENTITY, Matrix2::IDENTITY).unwrap();
        assert_eq!(k, Matrix2::ZERO);

        let k = kalman_gain(Matrix2::IDENTITY, Matrix2::IDENTITY, Matrix2::IDENTITY).unwrap();
        assert_eq!(k, Matrix2::diag(0.5, 0.5));
    }

    #[test]
    fn gain_singular_innovation() {
        assert_eq!(
            kalman_gain(Matrix2::ZERO, Matrix2::IDENTITY, Matrix2::ZERO),
            Err(EstimationError::SingularInnovation)
        );
    }

    #[test]
    fn fusion_cases() {
        let mut f = filter(0.1);
        let x = StateVector2::new(3.0, -1.0);
        f.set_prediction(x, Matrix2::diag(0.3, 0.7));
        assert_eq!(f.best_estimate(x), x);

        f.set_prediction(x, Matrix2::IDENTITY);
        let z = StateVector2::new(2.5, 0.25);
        assert_eq!(f.best_estimate(z), z);

        f.set_prediction(StateVector2::ZERO, Matrix2::diag(0.5, 0.5));
        assert_eq!(f.best_estimate(StateVector2::new(2.0, 4.0)), StateVector2::new(1.0, 2.0));
    }

    #[test]
    fn posterior_covariance_cases() {
        let mut f = filter(0.1);
        let prior = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        f.set_prior(prior, Matrix2::ZERO);
        assert_eq!(f.update_covariance(), prior);
        f.set_prior(prior, Matrix2::IDENTITY);
        assert_eq!(f.update_covariance(), Matrix2::ZERO);
        f.set_prior(Matrix2::IDENTITY, Matrix2::diag(0.5, 0.5));
        assert_eq!(f.update_covariance(), Matrix2::diag(0.5, 0.5));
    }

    #[test]
    fn bootstrap_takes_measurement() {
        let mut f = filter(0.1);
        let z = StateVector2::new(37.1, 0.4);
        let (est, pred) = f.filter_tick(z, 0.0).unwrap();
        assert_eq!(est, z);
        assert!(close(pred, StateVector2::new(37.1 + 0.04, 0.4), 1e-12));
    }

    #[test]
    fn noise_free_constant_velocity_converges() {
        let dt = 0.1;
        let mut f = filter(dt);
        let truth = |k: usize| StateVector2::new(20.0 + 1.5 * k as f64 * dt, 1.5);
        // Start from a wrong first measurement so convergence is exercised.
        f.filter_tick(StateVector2::new(25.0, -2.0), 0.0).unwrap();
        let mut last = StateVector2::ZERO;
        for k in 1..3000 {
            last = f.filter_tick(truth(k), 0.0).unwrap().0;
        }
        assert!(close(last, truth(2999), 1e-9));
    }

    #[test]
    fn own_velocity_prediction() {
        assert_eq!(predict_own_velocity(30.0, 0.0, 0.1), 30.0);
        assert!((predict_own_velocity(30.0, -3.0, 0.1) - 29.7).abs() < 1e-12);
        assert!((predict_own_velocity(0.0, 3.0, 0.2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn extrapolate_chains_steps() {
        let f = filter(0.1);
        let s = StateVector2::new(1.0, 2.0);
        let two = f.extrapolate(s, [0.5, -1.0]);
        assert_eq!(two, f.propagate(f.propagate(s, 0.5), -1.0));
        assert_eq!(f.extrapolate(s, []), s);
    }
}
