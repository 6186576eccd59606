//! Finite-difference oracles, independent of the closed forms they check.
//!
//! Jacobians are differenced through the geometric maps (ray casting); orbit
//! responses are differenced by moving scatterer 0, re-solving the periodic
//! orbit, and measuring the moved geometry directly.

use crate::collision::{apply_b, apply_f, Jacobian2, Mat2};
use crate::error::Result;
use crate::geometry::{wrap_pi, UCoords, Vec2};
use crate::orbits::{solve_periodic_with, PeriodicOrbit, SolveOptions};
use crate::perturbation::PerturbationSetup;

/// Central difference of `F` in `(α, φ)`.
pub fn fd_df_dstate(alpha: f64, phi: f64, r: Vec2, h: f64) -> Result<Jacobian2> {
    let col = |da: f64, dp: f64| -> Result<[f64; 2]> {
        let (a1, p1) = apply_f(alpha + da, phi + dp, r)?;
        let (a0, p0) = apply_f(alpha - da, phi - dp, r)?;
        Ok([(a1 - a0) / (2.0 * h), wrap_pi(p1 - p0) / (2.0 * h)])
    };
    Ok(Mat2::from_columns(col(h, 0.0)?, col(0.0, h)?))
}

fn u_diff(a: UCoords, b: UCoords, h: f64) -> [f64; 2] {
    [
        wrap_pi(a.omega_out - b.omega_out) / (2.0 * h),
        wrap_pi(a.omega_in - b.omega_in) / (2.0 * h),
    ]
}

/// Central difference of `B` in `u`.
pub fn fd_db_du(u: UCoords, r: Vec2, h: f64) -> Result<Jacobian2> {
    let col = |d0: f64, d1: f64| -> Result<[f64; 2]> {
        let p = apply_b(UCoords::new(u.omega_out + d0, u.omega_in + d1), r)?;
        let m = apply_b(UCoords::new(u.omega_out - d0, u.omega_in - d1), r)?;
        Ok(u_diff(p, m, h))
    };
    Ok(Mat2::from_columns(col(h, 0.0)?, col(0.0, h)?))
}

/// Central difference of `B` in the displacement `r`.
pub fn fd_db_dr(u: UCoords, r: Vec2, h: f64) -> Result<Jacobian2> {
    let col =
        |d: Vec2| -> Result<[f64; 2]> { Ok(u_diff(apply_b(u, r + d)?, apply_b(u, r - d)?, h)) };
    Ok(Mat2::from_columns(
        col(Vec2::new(h, 0.0))?,
        col(Vec2::new(0.0, h))?,
    ))
}

/// Double-double evaluation of the same maps, so that differences at small
/// steps measure truncation rather than round-off.
///
/// Base angles enter only through their unit vectors; perturbations are
/// exact rotations and output changes are read off as small angles between
/// landing directions, so no general-argument trigonometry is needed.
pub mod extended {
    use twofloat::TwoFloat;

    use super::{Jacobian2, Mat2, Result};
    use crate::error::Error;
    use crate::geometry::{CollisionState, UCoords, Vec2};

    type T = TwoFloat;
    type V = (T, T);

    /// `a / b` to double-double accuracy. The crate's own `TwoFloat` division
    /// forms its reciprocal residual without a fused multiply-add and is only
    /// good to about `f64` precision; one correction step repairs it.
    fn quot(a: T, b: T) -> T {
        let q = a / b.hi();
        q + (a - b * q) / b.hi()
    }

    fn lift(v: Vec2) -> V {
        (T::from(v.x), T::from(v.y))
    }

    /// `(sin a, cos a)` for `|a| ≲ 1e-3`, by truncated series.
    fn small_sin_cos(a: T) -> (T, T) {
        let a2 = a * a;
        let s = a * (1.0 - a2 / 6.0 * (1.0 - a2 / 20.0 * (1.0 - a2 / 42.0 * (1.0 - a2 / 72.0))));
        let c = 1.0 - a2 / 2.0 * (1.0 - a2 / 12.0 * (1.0 - a2 / 30.0 * (1.0 - a2 / 56.0)));
        (s, c)
    }

    fn rotate(v: V, a: T) -> V {
        let (s, c) = small_sin_cos(a);
        (v.0 * c - v.1 * s, v.0 * s + v.1 * c)
    }

    /// Signed angle from `a` to `b`, assumed small.
    fn small_angle(a: V, b: V) -> Result<T> {
        let x = quot(a.0 * b.1 - a.1 * b.0, a.0 * b.0 + a.1 * b.1);
        if x.hi().abs() > 1e-2 {
            return Err(Error::Domain("finite-difference step too large".into()));
        }
        let x2 = x * x;
        Ok(x * (1.0 - x2 * (1.0 / 3.0 - x2 * (T::from(0.2) - x2 * (1.0 / 7.0 - x2 / 9.0)))))
    }

    /// Direction from `r` to where the ray from `q` along `e` meets the
    /// unit circle about `r`.
    fn landing(q: V, e: V, r: V) -> Result<V> {
        let (mx, my) = (q.0 - r.0, q.1 - r.1);
        let b = e.0 * mx + e.1 * my;
        let c = mx * mx + my * my - 1.0;
        let disc = b * b - c;
        if disc.hi() <= 0.0 || b.hi() >= 0.0 {
            return Err(Error::Miss);
        }
        // near root of t² + 2bt + c, in cancellation-free form
        let t = quot(c, -b + disc.sqrt());
        Ok((mx + e.0 * t, my + e.1 * t))
    }

    /// Change of `φ_{k+1}` between the flights `(q⁻, e⁻)` and `(q⁺, e⁺)`.
    fn landing_shift(minus: (V, V, V), plus: (V, V, V)) -> Result<T> {
        small_angle(
            landing(minus.0, minus.1, minus.2)?,
            landing(plus.0, plus.1, plus.2)?,
        )
    }

    /// Central difference of `F` in `(α, φ)`.
    pub fn fd_df_dstate(alpha: f64, phi: f64, r: Vec2, h: f64) -> Result<Jacobian2> {
        let st = CollisionState::new(0, phi, alpha);
        let (n, e, r) = (
            lift(st.normal()),
            lift(Vec2::from_angle(phi - alpha)),
            lift(r),
        );
        let flight = |da: T, dp: T| (rotate(n, dp), rotate(e, dp - da), r);
        let col = |da: f64, dp: f64| -> Result<[f64; 2]> {
            let (da, dp) = (T::from(da), T::from(dp));
            let dphi1 = landing_shift(flight(-da, -dp), flight(da, dp))?;
            // α_{k+1} = ω_k − φ_{k+1} − π
            let dalpha1 = (dp - da) * 2.0 - dphi1;
            Ok([(dalpha1 / (2.0 * h)).hi(), (dphi1 / (2.0 * h)).hi()])
        };
        Ok(Mat2::from_columns(col(h, 0.0)?, col(0.0, h)?))
    }

    /// Central difference of `B` in `u`.
    pub fn fd_db_du(u: UCoords, r: Vec2, h: f64) -> Result<Jacobian2> {
        let (phi, _) = u.phi_alpha();
        let (n, e, r) = (
            lift(Vec2::from_angle(phi)),
            lift(Vec2::from_angle(u.omega_out)),
            lift(r),
        );
        let flight = |d0: T, d1: T| (rotate(n, (d0 + d1) / 2.0), rotate(e, d0), r);
        let col = |d0: f64, d1: f64| -> Result<[f64; 2]> {
            let (d0, d1) = (T::from(d0), T::from(d1));
            let dphi1 = landing_shift(flight(-d0, -d1), flight(d0, d1))?;
            // ω_{k+1} = 2φ_{k+1} − ω_k + π, and the second slot carries ω_k
            let dw1 = dphi1 * 2.0 - d0 * 2.0;
            Ok([(dw1 / (2.0 * h)).hi(), (d0 * 2.0 / (2.0 * h)).hi()])
        };
        Ok(Mat2::from_columns(col(h, 0.0)?, col(0.0, h)?))
    }

    /// Central difference of `B` in the displacement `r`.
    pub fn fd_db_dr(u: UCoords, r: Vec2, h: f64) -> Result<Jacobian2> {
        let (phi, _) = u.phi_alpha();
        let (n, e, r) = (
            lift(Vec2::from_angle(phi)),
            lift(Vec2::from_angle(u.omega_out)),
            lift(r),
        );
        let flight = |dx: T, dy: T| (n, e, (r.0 + dx, r.1 + dy));
        let col = |dx: f64, dy: f64| -> Result<[f64; 2]> {
            let (dx, dy) = (T::from(dx), T::from(dy));
            let dphi1 = landing_shift(flight(-dx, -dy), flight(dx, dy))?;
            Ok([(dphi1 * 2.0 / (2.0 * h)).hi(), 0.0])
        };
        Ok(Mat2::from_columns(col(h, 0.0)?, col(0.0, h)?))
    }
}

/// Orbits re-solved with `C_0` moved to `±step` along `θ`.
pub struct Bracket<'a> {
    setup: &'a PerturbationSetup,
    pub step: f64,
    pub plus: PeriodicOrbit,
    pub minus: PeriodicOrbit,
    c_plus: Vec2,
    c_minus: Vec2,
}

/// The periodic orbit with scatterer 0 displaced by `gamma` along `θ`,
/// seeded from the unperturbed solution.
pub fn resolve_at(setup: &PerturbationSetup, gamma: f64) -> Result<(PeriodicOrbit, Vec2)> {
    let c = setup.table.center(0) + setup.velocity() * gamma;
    let table = setup.table.with_center(0, c)?;
    let opts = SolveOptions::seeded(setup.orbit.phis());
    Ok((
        solve_periodic_with(&table, &setup.orbit.sequence, &opts)?,
        c,
    ))
}

impl<'a> Bracket<'a> {
    pub fn new(setup: &'a PerturbationSetup, step: f64) -> Result<Self> {
        let (plus, c_plus) = resolve_at(setup, step)?;
        let (minus, c_minus) = resolve_at(setup, -step)?;
        Ok(Self {
            setup,
            step,
            plus,
            minus,
            c_plus,
            c_minus,
        })
    }

    fn point(&self, o: &PeriodicOrbit, c0: Vec2, k: usize) -> Vec2 {
        let idx = o.sequence.indices()[k];
        let c = if idx == 0 {
            c0
        } else {
            self.setup.table.center(idx)
        };
        c + Vec2::from_angle(o.states[k].phi)
    }

    pub fn u0_prime(&self) -> [f64; 2] {
        u_diff(self.plus.u(0), self.minus.u(0), self.step)
    }

    pub fn alpha0_prime(&self) -> f64 {
        (self.plus.states[0].alpha - self.minus.states[0].alpha) / (2.0 * self.step)
    }

    /// `(ℓ_0⁺, ℓ_0⁻)`: the velocity of `Q_0` projected on the left normals
    /// of the outgoing and incoming segments.
    pub fn ell0(&self) -> (f64, f64) {
        let dq = (self.point(&self.plus, self.c_plus, 0)
            - self.point(&self.minus, self.c_minus, 0))
            * (0.5 / self.step);
        let o = &self.setup.orbit;
        let n = o.period();
        let left = |w: f64| Vec2::from_angle(w).perp();
        (dq.dot(left(o.omega[0])), dq.dot(left(o.omega[n - 1])))
    }

    /// Signed distance of `p` from the line of segment `j`, measured along
    /// that segment's left normal.
    fn line_offset(&self, o: &PeriodicOrbit, c0: Vec2, j: usize, p: Vec2) -> f64 {
        (p - self.point(o, c0, j)).dot(Vec2::from_angle(o.omega[j]).perp())
    }

    /// `ℓ` at distance `d` from `Q_j` along segment `j`: the rate at which
    /// the segment's line moves past the fixed point.
    pub fn ell_at(&self, j: usize, d: f64) -> f64 {
        let o = &self.setup.orbit;
        let p = o.states[j].point(&self.setup.table) + Vec2::from_angle(o.omega[j]) * d;
        let plus = self.line_offset(&self.plus, self.c_plus, j, p);
        let minus = self.line_offset(&self.minus, self.c_minus, j, p);
        -(plus - minus) / (2.0 * self.step)
    }

    /// Rate of change of the clearance between `C_0` and segment `k*`.
    pub fn h_prime(&self) -> f64 {
        let k = self.setup.k_star;
        let plus = -self.line_offset(&self.plus, self.c_plus, k, self.c_plus);
        let minus = -self.line_offset(&self.minus, self.c_minus, k, self.c_minus);
        (plus - minus) / (2.0 * self.step)
    }
}

/// Denominator floor for response errors. Responses are rates per unit
/// speed of `C_0`, so below this size errors are in effect absolute: a
/// vanishing response and its re-solve noise (~1e-10) still compare.
pub const RESPONSE_FLOOR: f64 = 1e-4;

/// Relative error with a floor on the denominator.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(RESPONSE_FLOOR)
}

/// Componentwise relative error of two vectors, scaled by the larger norm.
pub fn rel_err_vec(a: [f64; 2], b: [f64; 2]) -> f64 {
    let scale = a[0]
        .abs()
        .max(a[1].abs())
        .max(b[0].abs())
        .max(b[1].abs())
        .max(RESPONSE_FLOOR);
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{db_dr, db_du, df_dstate, step_b};
    use crate::geometry::{BilliardTable, CollisionState};
    use crate::orbits::{solve_periodic, SymbolSequence};
    use crate::perturbation::{ell_limits, h_prime, normalize_frame, propagate, solve_u0_prime};

    #[test]
    fn jacobians_match_geometry() {
        let r = Vec2::new(3.1, 2.4);
        let st = CollisionState::new(0, 0.55, 0.2);
        let (_, step) = step_b(st.to_u(), r).unwrap();
        let a = db_du(&step).unwrap();
        let f = fd_db_du(st.to_u(), r, 1e-6).unwrap();
        assert!(a.rel_diff(&f) < 1e-6);
        let a = db_dr(&step).unwrap();
        let f = fd_db_dr(st.to_u(), r, 1e-6).unwrap();
        assert!(a.rel_diff(&f) < 1e-6);
        let a = df_dstate(&step).unwrap();
        let f = fd_df_dstate(st.alpha, st.phi, r, 1e-6).unwrap();
        assert!(a.rel_diff(&f) < 1e-6);
    }

    #[test]
    fn extended_differences_converge() {
        let r = Vec2::new(3.1, 2.4);
        let st = CollisionState::new(0, 0.55, 0.2);
        let (_, step) = step_b(st.to_u(), r).unwrap();
        let cases: [(Mat2, &dyn Fn(f64) -> Mat2); 3] = [
            (db_du(&step).unwrap(), &|h| {
                extended::fd_db_du(st.to_u(), r, h).unwrap()
            }),
            (db_dr(&step).unwrap(), &|h| {
                extended::fd_db_dr(st.to_u(), r, h).unwrap()
            }),
            (df_dstate(&step).unwrap(), &|h| {
                extended::fd_df_dstate(st.alpha, st.phi, r, h).unwrap()
            }),
        ];
        for (a, fd) in cases {
            let (e6, e7) = (a.rel_diff(&fd(1e-6)), a.rel_diff(&fd(1e-7)));
            assert!(e6 < 1e-6 && e7 < 0.05 * e6, "{e6:e} {e7:e}");
        }
    }

    #[test]
    fn responses_match_resolve() {
        let t = BilliardTable::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.3, 1.2),
            Vec2::new(-1.0, 5.1),
            Vec2::new(-4.6, -0.8),
            Vec2::new(1.5, -4.8),
        ])
        .unwrap();
        let o = solve_periodic(&t, &SymbolSequence::new(vec![0, 1, 2, 3, 4], 5).unwrap()).unwrap();
        let s = normalize_frame(&t, &o, None, None).unwrap();
        let ctx = s.context().unwrap();
        let b = Bracket::new(&s, 1e-6).unwrap();
        assert!(rel_err_vec(solve_u0_prime(&s, &ctx).unwrap(), b.u0_prime()) < 1e-4);
        let (lp, lm) = ell_limits(&s, &ctx).unwrap();
        let (fp, fm) = b.ell0();
        assert!(rel_err(lp, fp) < 1e-4 && rel_err(lm, fm) < 1e-4);
        let w = propagate(&s, &ctx).unwrap();
        for j in 0..5 {
            for d in [0.3, 1.1] {
                assert!(rel_err(w.ell(j, d), b.ell_at(j, d)) < 1e-4, "segment {j}");
            }
        }
        assert!(rel_err(h_prime(&s, &w), b.h_prime()) < 1e-4);
    }
}
