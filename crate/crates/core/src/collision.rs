//! One-step collision maps and their analytic Jacobians.
//!
//! `F` acts on `(α, φ)` and `B` on `u = (ω_k, ω_{k−1})`; `B` also takes the
//! center displacement `r_k = C_{k+1} − C_k` so that moving a scatterer can be
//! differentiated. All Jacobians are specialized to unit curvature.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    is_grazing_angle, ray_circle, wrap_2pi, wrap_pi, CollisionState, UCoords, Vec2,
};

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// Derivative of one set of angle pairs with respect to another.
pub type Jacobian2 = Mat2;

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn from_columns(c0: [f64; 2], c1: [f64; 2]) -> Self {
        Mat2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let [[a, b], [c, e]] = self.0;
        Some(Mat2::new(e / d, -b / d, -c / d, a / d))
    }

    pub fn transpose(&self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2::new(a, c, b, d)
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2::new(k * a, k * b, k * c, k * d)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest entry difference relative to the larger matrix scale.
    pub fn rel_diff(&self, other: &Mat2) -> f64 {
        let scale = self.max_abs().max(other.max_abs());
        if scale == 0.0 {
            return 0.0;
        }
        (*self - *other).max_abs() / scale
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [[a, b], [c, d]] = self.0;
        write!(f, "[[{a:.6e}, {b:.6e}], [{c:.6e}, {d:.6e}]]")
    }
}

/// Linearization of `u = (φ − α, φ + α + π)` in `(α, φ)` order.
pub const U_FROM_ALPHA_PHI: Mat2 = Mat2([[-1.0, 1.0], [1.0, 1.0]]);

/// Data of one free flight `Q_k → Q_{k+1}`, always produced by the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepData {
    alpha_k: f64,
    alpha_k1: f64,
    s_k: f64,
    omega_k: f64,
    r_k: Vec2,
}

impl StepData {
    pub(crate) fn new(alpha_k: f64, alpha_k1: f64, s_k: f64, omega_k: f64, r_k: Vec2) -> Self {
        Self {
            alpha_k,
            alpha_k1,
            s_k,
            omega_k,
            r_k,
        }
    }

    pub fn alpha_k(&self) -> f64 {
        self.alpha_k
    }

    pub fn alpha_k1(&self) -> f64 {
        self.alpha_k1
    }

    /// Distance between the two collision points.
    pub fn s_k(&self) -> f64 {
        self.s_k
    }

    pub fn omega_k(&self) -> f64 {
        self.omega_k
    }

    pub fn r_k(&self) -> Vec2 {
        self.r_k
    }

    fn sec_alpha_k1(&self) -> Result<f64> {
        if self.alpha_k1.abs() > FRAC_PI_2 - crate::geometry::GRAZING_TOL {
            return Err(Error::UnboundedJacobian {
                alpha: self.alpha_k1,
            });
        }
        Ok(1.0 / self.alpha_k1.cos())
    }
}

/// Apply `B`: from `u_k` on a scatterer to the next collision on the
/// scatterer displaced by `r`.
pub fn apply_b(u: UCoords, r: Vec2) -> Result<UCoords> {
    step_b(u, r).map(|(u1, _)| u1)
}

/// `B` together with the step data of the flight it performs.
pub fn step_b(u: UCoords, r: Vec2) -> Result<(UCoords, StepData)> {
    let from = CollisionState::from_u(0, u)?;
    let q = from.normal();
    let dir = Vec2::from_angle(u.omega_out);
    let (t, _) = ray_circle(q, dir, r).ok_or(Error::Miss)?;
    if t <= 0.0 {
        return Err(Error::Miss);
    }
    let p = q + dir * t;
    let phi1 = (p - r).angle();
    let alpha1 = wrap_pi(u.omega_out - phi1 - PI);
    if is_grazing_angle(alpha1) {
        return Err(Error::Grazing {
            margin: FRAC_PI_2 - alpha1.abs(),
        });
    }
    let u1 = UCoords::new(phi1 - alpha1, u.omega_out);
    Ok((
        u1,
        StepData::new(from.alpha, alpha1, t, wrap_2pi(u.omega_out), r),
    ))
}

/// Apply `F`: `(α_k, φ_k) ↦ (α_{k+1}, φ_{k+1})` for a target displaced by `r`.
///
/// The returned `φ_{k+1}` is continued to the branch nearest `φ_k + π`
/// so that finite differences do not see the 2π wrap.
pub fn apply_f(alpha: f64, phi: f64, r: Vec2) -> Result<(f64, f64)> {
    let u = CollisionState {
        scatterer: 0,
        phi,
        alpha,
    }
    .to_u();
    let (u1, step) = step_b(u, r)?;
    let (phi1, _) = u1.phi_alpha();
    let reference = phi + PI;
    Ok((step.alpha_k1, reference + wrap_pi(phi1 - reference)))
}

/// `∂(α_{k+1}, φ_{k+1}) / ∂(α_k, φ_k)`.
pub fn df_dstate(step: &StepData) -> Result<Jacobian2> {
    let sec = step.sec_alpha_k1()?;
    let (s, ca, ca1) = (step.s_k, step.alpha_k.cos(), step.alpha_k1.cos());
    Ok(Mat2::new(s + ca1, -(s + ca + ca1), -s, s + ca).scale(-sec))
}

/// `∂B/∂u (u_k, r_k)`.
pub fn db_du(step: &StepData) -> Result<Jacobian2> {
    let sec = step.sec_alpha_k1()?;
    let (s, ca, ca1) = (step.s_k, step.alpha_k.cos(), step.alpha_k1.cos());
    Ok(Mat2::new(2.0 * s + ca + ca1, ca, -ca1, 0.0).scale(-sec))
}

/// `∂B/∂r (u_k, r_k)`; columns are the x and y components of `r`.
pub fn db_dr(step: &StepData) -> Result<Jacobian2> {
    let sec = step.sec_alpha_k1()?;
    let (sw, cw) = step.omega_k.sin_cos();
    Ok(Mat2::new(2.0 * sw, -2.0 * cw, 0.0, 0.0).scale(-sec))
}
