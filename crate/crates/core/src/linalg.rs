//! Fixed-size 2-vector and 2×2 matrix kernels used by the pair filters.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Tolerance used for the symmetry and positive-semidefinite checks on
/// covariance matrices.
pub const COVARIANCE_TOLERANCE: f64 = 1e-9;

/// Determinant floor below which a 2×2 matrix is treated as singular.
pub const DETERMINANT_FLOOR: f64 = 1e-12;

/// `[position-like, velocity-like]` pair. Used for measurements, predictions
/// and estimates of a relative state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector2 {
    pub position: f64,
    pub velocity: f64,
}

impl StateVector2 {
    pub const ZERO: Self = Self::new(0.0, 0.0);

    pub const fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite()
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.position * k, self.velocity * k)
    }
}

impl Add for StateVector2 {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.position + rhs.position, self.velocity + rhs.velocity)
    }
}

impl Sub for StateVector2 {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self::new(self.position - rhs.position, self.velocity - rhs.velocity)
    }
}

/// Row-major 2×2 matrix. Serialized as `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub const ZERO: Self = Self([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Self = Self([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self([[a, b], [c, d]])
    }

    pub const fn diag(a: f64, d: f64) -> Self {
        Self([[a, 0.0], [0.0, d]])
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0[row][col]
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Self::new(a, c, b, d)
    }

    pub fn determinant(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Closed-form adjugate inverse. Returns `None` when `|det| <= DETERMINANT_FLOOR`.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() <= DETERMINANT_FLOOR {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some(Self::new(d / det, -b / det, -c / det, a / det))
    }

    pub fn scale(&self, k: f64) -> Self {
        let [[a, b], [c, d]] = self.0;
        Self::new(a * k, b * k, c * k, d * k)
    }

    pub fn mul_vec(&self, v: StateVector2) -> StateVector2 {
        let [[a, b], [c, d]] = self.0;
        StateVector2::new(
            a * v.position + b * v.velocity,
            c * v.position + d * v.velocity,
        )
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrized(&self) -> Self {
        let off = 0.5 * (self.0[0][1] + self.0[1][0]);
        Self::new(self.0[0][0], off, off, self.0[1][1])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= tol
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> (f64, f64) {
        let s = self.symmetrized();
        let half_trace = 0.5 * s.trace();
        let half_diff = 0.5 * (s.0[0][0] - s.0[1][1]);
        let radius = half_diff.hypot(s.0[0][1]);
        (half_trace - radius, half_trace + radius)
    }

    /// Symmetric within `tol` and no eigenvalue below `-tol`.
    pub fn is_covariance(&self, tol: f64) -> bool {
        self.is_finite() && self.is_symmetric(tol) && self.symmetric_eigenvalues().0 >= -tol
    }
}

impl Add for Matrix2 {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for (row, rrow) in out.0.iter_mut().zip(rhs.0) {
            for (x, y) in row.iter_mut().zip(rrow) {
                *x += y;
            }
        }
        out
    }
}

impl Sub for Matrix2 {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Matrix2 {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = rhs.0;
        Self::new(
            a * e + b * g,
            a * f + b * h,
            c * e + d * g,
            c * f + d * h,
        )
    }
}

impl Mul<StateVector2> for Matrix2 {
    type Output = StateVector2;

    fn mul(self, rhs: StateVector2) -> StateVector2 {
        self.mul_vec(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m = Matrix2::diag(2.0, 4.0);
        assert_eq!(m.inverse().unwrap(), Matrix2::diag(0.5, 0.25));
    }

    #[test]
    fn inverse_rejects_singular() {
        assert!(Matrix2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
        assert!(Matrix2::diag(1e-7, 1e-7).inverse().is_none());
    }

    #[test]
    fn product_against_hand_values() {
        let f = Matrix2::new(1.0, 0.1, 0.0, 1.0);
        let p = f * Matrix2::IDENTITY * f.transpose();
        assert!((p.at(0, 0) - 1.01).abs() < 1e-15);
        assert!((p.at(0, 1) - 0.1).abs() < 1e-15);
        assert!((p.at(1, 0) - 0.1).abs() < 1e-15);
        assert!((p.at(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_and_psd() {
        let (lo, hi) = Matrix2::new(2.0, 1.0, 1.0, 2.0).symmetric_eigenvalues();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
        assert!(Matrix2::diag(1.0, 0.0).is_covariance(COVARIANCE_TOLERANCE));
        assert!(!Matrix2::new(1.0, 2.0, 2.0, 1.0).is_covariance(COVARIANCE_TOLERANCE));
        assert!(!Matrix2::new(1.0, 0.5, 0.0, 1.0).is_covariance(COVARIANCE_TOLERANCE));
    }
}
