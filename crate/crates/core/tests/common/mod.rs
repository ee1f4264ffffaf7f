//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{Matrix2, Vector2};

use platoon::{Matrix2 as PMatrix, StateVector2};

pub fn to_na(m: PMatrix) -> Matrix2<f64> {
    Matrix2::new(m.at(0, 0), m.at(0, 1), m.at(1, 0), m.at(1, 1))
}

pub fn vec_na(v: StateVector2) -> Vector2<f64> {
    Vector2::new(v.position, v.velocity)
}

/// Straight-line Kalman recursion for the relative-state pair model,
/// written against nalgebra.
pub struct OracleFilter {
    f: Matrix2<f64>,
    b: Vector2<f64>,
    q: Matrix2<f64>,
    r: Matrix2<f64>,
    h: Matrix2<f64>,
    p0: Matrix2<f64>,
    pub prediction: Option<Vector2<f64>>,
    pub p: Matrix2<f64>,
    pub k: Matrix2<f64>,
}

impl OracleFilter {
    pub fn new(dt: f64, q: Matrix2<f64>, r: Matrix2<f64>, p0: Matrix2<f64>) -> Self {
        Self {
            f: Matrix2::new(1.0, dt, 0.0, 1.0),
            b: Vector2::new(0.5 * dt * dt, dt),
            q,
            r,
            h: Matrix2::identity(),
            p0,
            prediction: None,
            p: p0,
            k: Matrix2::zeros(),
        }
    }

    /// Fuse `z`, then predict one tick ahead under relative acceleration
    /// `a`. Returns (estimate, prediction).
    pub fn tick(&mut self, z: Vector2<f64>, a: f64) -> (Vector2<f64>, Vector2<f64>) {
        let estimate = match self.prediction {
            None => {
                self.p = self.p0;
                z
            }
            Some(x_hat) => x_hat + self.k * (z - self.h * x_hat),
        };
        let x_hat = self.f * estimate + self.b * a;
        let prior = self.f * self.p * self.f.transpose() + self.q;
        let s = self.h * prior * self.h.transpose() + self.r;
        self.k = prior * self.h.transpose() * s.try_inverse().expect("invertible innovation");
        let posterior = (Matrix2::identity() - self.k * self.h) * prior;
        self.p = (posterior + posterior.transpose()) * 0.5;
        self.prediction = Some(x_hat);
        (estimate, x_hat)
    }
}

/// Mean of the three smallest and three largest values by full sort.
pub fn sort_extremes(gaps: &[f64]) -> (f64, f64) {
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (
        (sorted[0] + sorted[1] + sorted[2]) / 3.0,
        (sorted[n - 1] + sorted[n - 2] + sorted[n - 3]) / 3.0,
    )
}
