//! First-order response of a periodic orbit to translating scatterer 0.
//!
//! Scatterer 0 moves with unit speed in direction `θ`, `C_0(γ) = C_0 +
//! γ (cos θ, sin θ)`, and the orbit is continued. The response is the
//! derivative `u_0′` of the collision coordinates at scatterer 0, the
//! wave-front displacement rate `ℓ` of the orbit's segments along their left
//! normals `(−sin ω, cos ω)`, and the rate `h′` at which the clearance between
//! `C_0` and a nearby segment `k*` closes.
//!
//! Frame: `C_0` at the origin, `φ_0 = 0`, and `C_0` on the right of segment
//! `k*`, so that the foot point is `Z = h (−sin ω_{k*}, cos ω_{k*})` with
//! `h > 0` and moving toward `Z` means `θ = ω_{k*} + π/2`. In this frame
//! `h′ = ℓ(Z) − 1`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::collision::{db_dr, db_du, Mat2};
use crate::error::{Error, Result};
use crate::gcalc::GContext;
use crate::geometry::{closest_point_on_segment, wrap_2pi, BilliardTable, RigidMotion, Vec2};
use crate::orbits::{jacobian_product, PeriodicOrbit};

/// Relative size of `D` below which the orbit counts as parabolic.
pub const DEGENERATE_D: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationSetup {
    /// Table in the normalized frame.
    pub table: BilliardTable,
    /// Orbit in the normalized frame, collision 0 on scatterer 0.
    pub orbit: PeriodicOrbit,
    /// Map from the input frame to the normalized one.
    pub frame: RigidMotion,
    /// Index of the collision in the input orbit that became collision 0.
    pub shift: usize,
    pub k_star: usize,
    /// Direction of motion of `C_0`.
    pub theta: f64,
    /// Foot point of `C_0` on segment `k*`.
    pub z: Vec2,
    /// Distance from `C_0` to segment `k*`.
    pub h: f64,
}

impl PerturbationSetup {
    pub fn context(&self) -> Result<GContext> {
        self.orbit.gcontext()
    }

    /// Same setup moving `C_0` in direction `theta` instead of toward `Z`.
    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            theta: wrap_2pi(theta),
            ..self.clone()
        }
    }

    pub fn period(&self) -> usize {
        self.orbit.period()
    }

    /// `C_0′ = (cos θ, sin θ)`.
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// `θ − φ_0`; equals `θ` in the normalized frame.
    fn theta_rel(&self) -> f64 {
        self.theta - self.orbit.states[0].phi
    }
}

/// Segments `k` (not touching scatterer 0) whose closest approach to `C_0` is
/// interior, as `(k, clearance, foot)`.
pub fn candidate_segments(table: &BilliardTable, orbit: &PeriodicOrbit) -> Vec<(usize, f64, Vec2)> {
    let n = orbit.period();
    let pts = orbit.points(table);
    let c0 = table.center(0);
    (0..n)
        .filter(|&k| orbit.sequence.at(k as i64) != 0 && orbit.sequence.at(k as i64 + 1) != 0)
        .filter_map(|k| {
            let (p0, p1) = (pts[k], pts[(k + 1) % n]);
            let (foot, t) = closest_point_on_segment(c0, p0, p1);
            (t > 0.0 && t < 1.0).then(|| (k, c0.distance(foot), foot))
        })
        .collect()
}

/// Move to the normalized frame.
///
/// `k_star` picks the segment whose clearance to `C_0` is tracked; by default
/// the closest interior approach is used. With `delta`, that clearance must
/// lie in `(1, 1 + δ)`.
pub fn normalize_frame(
    table: &BilliardTable,
    orbit: &PeriodicOrbit,
    k_star: Option<usize>,
    delta: Option<f64>,
) -> Result<PerturbationSetup> {
    if orbit.sequence.count(0) != 1 {
        return Err(Error::Precondition(format!(
            "scatterer 0 must be hit exactly once per period (sequence {})",
            orbit.sequence
        )));
    }
    let shift = orbit
        .sequence
        .indices()
        .iter()
        .position(|&i| i == 0)
        .unwrap();
    let rotated = orbit.rotated(shift);

    let candidates = candidate_segments(table, &rotated);
    let (k, clearance, _) = match k_star {
        Some(want) => {
            let k = (want + rotated.period() - shift) % rotated.period();
            *candidates.iter().find(|c| c.0 == k).ok_or_else(|| {
                Error::Precondition(format!(
                    "segment {want} does not pass C_0 with an interior foot point"
                ))
            })?
        }
        None => *candidates
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| {
                Error::Precondition("no segment passes C_0 with an interior foot point".into())
            })?,
    };
    if clearance <= 1.0 {
        return Err(Error::Precondition(format!(
            "segment {k} clearance {clearance} does not exceed 1"
        )));
    }
    if let Some(d) = delta {
        if clearance >= 1.0 + d {
            return Err(Error::Precondition(format!(
                "segment {k} clearance {clearance} is not below 1 + δ = {}",
                1.0 + d
            )));
        }
    }

    let c0 = table.center(0);
    let phi0 = rotated.states[0].phi;
    let mut frame = RigidMotion {
        rotation: -phi0,
        translation: Vec2::ZERO,
        reflect: false,
    };
    let (s, c) = (-phi0).sin_cos();
    frame.translation = -Vec2::new(c * c0.x - s * c0.y, s * c0.x + c * c0.y);
    let omega = frame.apply_angle(rotated.omega[k]);
    let p = frame.apply(rotated.states[k].point(table));
    // signed distance of the segment line from C_0 = origin along the left normal
    if p.dot(Vec2::from_angle(omega).perp()) < 0.0 {
        frame.reflect = true;
    }

    let ntable = frame.apply_table(table)?;
    let norbit = rotated.transformed(&ntable, &frame)?;
    let omega = norbit.omega[k];
    let n_left = Vec2::from_angle(omega).perp();
    let h = norbit.states[k].point(&ntable).dot(n_left);
    Ok(PerturbationSetup {
        table: ntable,
        orbit: norbit,
        frame,
        shift,
        k_star: k,
        theta: wrap_2pi(omega + FRAC_PI_2),
        z: n_left * h,
        h,
    })
}

fn check_d(ctx: &GContext) -> Result<f64> {
    let d = ctx.d();
    let scale = ctx.d_scale();
    if !(d.abs() >= DEGENERATE_D * scale) {
        return Err(Error::DegenerateOrbit { d, scale });
    }
    Ok(d)
}

/// `u_0′` in closed form.
pub fn solve_u0_prime(setup: &PerturbationSetup, ctx: &GContext) -> Result<[f64; 2]> {
    let d = check_d(ctx)?;
    let n = ctx.period() as i64;
    let a0 = ctx.alpha(0);
    let c0 = ctx.cos_alpha(0);
    let th = setup.theta_rel();
    let pt = ctx.p_tilde(1, n);
    let off = c0 * ctx.g(1, n - 1)? - pt;
    let m = Mat2::new(ctx.g(1, n)?, off, -off, -ctx.g(0, n - 1)?);
    let f = m.apply([(a0 + th).sin(), (a0 - th).sin()]);
    Ok([-2.0 / d * f[0], -2.0 / d * f[1]])
}

/// `(ℓ_0⁺, ℓ_0⁻)`, the wave-front rates just after and just before `Q_0`.
///
/// The signed variants entering the numerators are `G − cos α_j G(j+1,k)`
/// (left) and `G − cos α_k G(j,k−1)` (right):
///
/// ```text
/// ℓ_0⁺ D = (G⁻ₗ(0,N) + p̃(0,N)) sin(α_0+θ) + (cos α_0 G⁻ₗ(0,N−1) + p̃(0,N)) sin(α_0−θ)
/// ℓ_0⁻ D = (cos α_0 G⁻ᵣ(1,N) + p̃(0,N)) sin(α_0+θ) + (G⁻ᵣ(0,N) + p̃(0,N)) sin(α_0−θ)
/// ```
pub fn ell_limits(setup: &PerturbationSetup, ctx: &GContext) -> Result<(f64, f64)> {
    let d = check_d(ctx)?;
    let n = ctx.period() as i64;
    let a0 = ctx.alpha(0);
    let c0 = ctx.cos_alpha(0);
    let th = setup.theta_rel();
    let (fp, fm) = ((a0 + th).sin(), (a0 - th).sin());
    let pt = ctx.p_tilde(0, n);
    let full = ctx.variants(0, n)?;
    let plus = (full.minus_left + pt) * fp + (c0 * ctx.variants(0, n - 1)?.minus_left + pt) * fm;
    let minus = (c0 * ctx.variants(1, n)?.minus_right + pt) * fp + (full.minus_right + pt) * fm;
    Ok((plus / d, minus / d))
}

/// Right-hand side and matrix of the linear system for `u_0′` obtained by
/// differentiating `u_N = u_0` along the chain of single-step Jacobians.
pub fn assemble_linear_system(setup: &PerturbationSetup) -> Result<(Mat2, [f64; 2])> {
    let (table, orbit) = (&setup.table, &setup.orbit);
    let n = orbit.period() as i64;
    let r0p = -setup.velocity();
    let a = Mat2::IDENTITY - jacobian_product(table, orbit, 0, n)?;
    let b = jacobian_product(table, orbit, 1, n)? * db_dr(&orbit.step(table, 0))?
        - db_dr(&orbit.step(table, n - 1))?;
    Ok((a, b.apply([r0p.x, r0p.y])))
}

/// Relative residual of `u0p` in the assembled linear system.
pub fn linear_system_residual(setup: &PerturbationSetup, u0p: [f64; 2]) -> Result<f64> {
    let (a, rhs) = assemble_linear_system(setup)?;
    let lhs = a.apply(u0p);
    let scale = [lhs[0], lhs[1], rhs[0], rhs[1]]
        .iter()
        .chain(a.0.iter().flatten())
        .fold(1e-300f64, |m, x| m.max(x.abs()));
    Ok(((lhs[0] - rhs[0]).abs()).max((lhs[1] - rhs[1]).abs()) / scale)
}

/// `(cos α_0 / 2)(u_0′[0] + u_0′[1]) + sin(α_0 + θ)`: the translation of
/// `Q_0` with its disk plus the rotation of the outgoing segment.
pub fn ell0_plus_decomposed(setup: &PerturbationSetup, ctx: &GContext, u0p: [f64; 2]) -> f64 {
    ctx.cos_alpha(0) / 2.0 * (u0p[0] + u0p[1]) + (ctx.alpha(0) + setup.theta_rel()).sin()
}

/// `α_0′`. The outgoing angle is `ω_0 = φ_0 − α_0` and the incoming one
/// `ω_{N−1} = φ_0 + α_0 + π`, so `α_0′ = (ω_{N−1}′ − ω_0′)/2`.
pub fn alpha0_prime(u0p: [f64; 2]) -> f64 {
    (u0p[1] - u0p[0]) / 2.0
}

/// Wave-front rates propagated once around the period.
#[derive(Debug, Clone, Serialize)]
pub struct WaveFront {
    /// `u_k′` for `k = 0..N−1`.
    pub u_prime: Vec<[f64; 2]>,
    /// `ℓ_k⁺` just after each collision.
    pub ell_plus: Vec<f64>,
    /// `ω_k′`, the slope of `ℓ` along segment `k`.
    pub omega_prime: Vec<f64>,
    pub s: Vec<f64>,
}

impl WaveFront {
    /// `ℓ` on segment `j` at distance `d` from `Q_j`.
    pub fn ell(&self, j: usize, d: f64) -> f64 {
        self.ell_plus[j] + d * self.omega_prime[j]
    }

    /// `ℓ` just before collision `k + 1`, i.e. at the end of segment `k`.
    pub fn ell_end(&self, k: usize) -> f64 {
        self.ell(k, self.s[k])
    }

    /// `ℓ_0⁻` recovered by propagation.
    pub fn ell0_minus(&self) -> f64 {
        self.ell_end(self.s.len() - 1)
    }

    /// `|ℓ|` at `per_segment` interior points of every segment, in order of
    /// travel starting after `Q_0`.
    pub fn sample_abs(&self, per_segment: usize) -> Vec<f64> {
        (0..self.s.len())
            .flat_map(|j| {
                (1..=per_segment).map(move |i| {
                    let d = self.s[j] * i as f64 / (per_segment + 1) as f64;
                    self.ell(j, d).abs()
                })
            })
            .collect()
    }
}

/// `u_k′` for the whole period.
///
/// Shooting `u_0′` forward amplifies round-off along the unstable direction
/// by the full expansion of the orbit, so the cyclic steps
/// `u_{k+1}′ = ∂B/∂u·u_k′ + ∂B/∂r·r_k′`, `u_N′ = u_0′`, are solved together
/// as one linear system; it is regular because the orbit is hyperbolic.
fn periodic_response(setup: &PerturbationSetup) -> Result<Vec<[f64; 2]>> {
    let (table, orbit) = (&setup.table, &setup.orbit);
    let n = orbit.period();
    let vel = setup.velocity();
    let mut lhs = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for k in 0..n {
        let step = orbit.step(table, k as i64);
        let a = db_du(&step)?;
        // forcing enters on the flights out of and into scatterer 0
        let r = match k {
            0 => -vel,
            k if k == n - 1 => vel,
            _ => Vec2::ZERO,
        };
        let f = db_dr(&step)?.apply([r.x, r.y]);
        let next = (k + 1) % n;
        for i in 0..2 {
            lhs[(2 * k + i, 2 * next + i)] += 1.0;
            for j in 0..2 {
                lhs[(2 * k + i, 2 * k + j)] -= a.get(i, j);
            }
            rhs[2 * k + i] += f[i];
        }
    }
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("periodic response system is singular".into()))?;
    Ok((0..n).map(|k| [x[2 * k], x[2 * k + 1]]).collect())
}

pub fn propagate(setup: &PerturbationSetup, ctx: &GContext) -> Result<WaveFront> {
    let u0p = solve_u0_prime(setup, ctx)?;
    let n = setup.period();
    let mut u_prime = periodic_response(setup)?;
    u_prime[0] = u0p;
    let mut ell_plus = vec![ell0_plus_decomposed(setup, ctx, u0p)];
    ell_plus
        .extend((1..n).map(|k| ctx.cos_alpha(k as i64) * (u_prime[k][0] + u_prime[k][1]) / 2.0));
    Ok(WaveFront {
        omega_prime: u_prime.iter().map(|u| u[0]).collect(),
        u_prime,
        ell_plus,
        s: setup.orbit.s.clone(),
    })
}

/// `ℓ(P)` at a point `P` strictly inside one of the orbit's segments.
pub fn ell_at(setup: &PerturbationSetup, wave: &WaveFront, p: Vec2) -> Result<f64> {
    let pts = setup.orbit.points(&setup.table);
    let n = pts.len();
    for j in 0..n {
        let (q0, q1) = (pts[j], pts[(j + 1) % n]);
        let (foot, t) = closest_point_on_segment(p, q0, q1);
        if t > 0.0 && t < 1.0 && foot.distance(p) < 1e-9 {
            return Ok(wave.ell(j, p.distance(q0)));
        }
    }
    Err(Error::Domain(format!(
        "{p} is not interior to a segment of the orbit"
    )))
}

/// Rate of change of the clearance `h`: `ℓ(Z)` less the approach speed of
/// `C_0` toward `Z`, so `h′ = ℓ(Z) − 1` when moving straight at `Z`.
pub fn h_prime(setup: &PerturbationSetup, wave: &WaveFront) -> f64 {
    let k = setup.k_star;
    let q = setup.orbit.states[k].point(&setup.table);
    let toward = (setup.z - setup.table.center(0)).normalized();
    wave.ell(k, setup.z.distance(q)) - setup.velocity().dot(toward)
}

/// `(1 − m cos α_0 / ((M+1)(2m+1)), 3/m)`.
pub fn bounds(alpha0: f64, m: f64, big_m: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) {
        return Err(Error::Precondition(format!(
            "minimum gap {m} must be positive"
        )));
    }
    Ok((
        1.0 - m * alpha0.cos() / ((big_m + 1.0) * (2.0 * m + 1.0)),
        3.0 / m,
    ))
}

/// Single-valley check of sampled `|ℓ|` over one period.
#[derive(Debug, Clone, Serialize)]
pub struct ValleyScan {
    pub samples: usize,
    pub local_minima: usize,
    pub max_abs: f64,
    /// `max(|ℓ_0⁺|, |ℓ_0⁻|)`.
    pub endpoint_max: f64,
}

impl ValleyScan {
    pub fn holds(&self) -> bool {
        self.local_minima <= 1 && self.max_abs <= self.endpoint_max * (1.0 + 1e-9) + 1e-12
    }
}

pub fn valley_scan(wave: &WaveFront, per_segment: usize) -> ValleyScan {
    let mut v = vec![wave.ell_plus[0].abs()];
    v.extend(wave.sample_abs(per_segment));
    v.push(wave.ell0_minus().abs());
    // plateaus of equal values count once
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let local_minima = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] < v[i - 1] && v[i] < v[i + 1])
        .count();
    ValleyScan {
        samples: v.len(),
        local_minima,
        max_abs: v.iter().fold(0.0, |m: f64, x| m.max(*x)),
        endpoint_max: wave.ell_plus[0].abs().max(wave.ell0_minus().abs()),
    }
}

/// Everything the first-order analysis says about one orbit.
#[derive(Debug, Clone, Serialize)]
pub struct ResponseReport {
    pub k_star: usize,
    pub h: f64,
    pub theta: f64,
    pub alpha0: f64,
    pub u0_prime: [f64; 2],
    pub ell0_plus: f64,
    pub ell0_minus: f64,
    pub alpha0_prime: f64,
    pub h_prime: f64,
    pub bound_ell: f64,
    pub bound_alpha: f64,
    /// `−min(1 − ℓ_0⁺, 1 − ℓ_0⁻)`, the ceiling `h′` must stay below.
    pub h_prime_ceiling: f64,
}

impl ResponseReport {
    pub fn ell_bound_holds(&self) -> bool {
        self.ell0_plus.abs() < self.bound_ell && self.ell0_minus.abs() < self.bound_ell
    }

    pub fn alpha_bound_holds(&self) -> bool {
        self.alpha0_prime.abs() < self.bound_alpha
    }

    pub fn h_prime_holds(&self) -> bool {
        self.h_prime < self.h_prime_ceiling
    }
}

pub fn respond(setup: &PerturbationSetup) -> Result<ResponseReport> {
    let ctx = setup.context()?;
    let u0p = solve_u0_prime(setup, &ctx)?;
    let (ell0_plus, ell0_minus) = ell_limits(setup, &ctx)?;
    let wave = propagate(setup, &ctx)?;
    let alpha0 = ctx.alpha(0);
    let (bound_ell, bound_alpha) = bounds(
        alpha0,
        setup.table.min_gap(),
        setup.table.max_center_distance(),
    )?;
    Ok(ResponseReport {
        k_star: setup.k_star,
        h: setup.h,
        theta: setup.theta,
        alpha0,
        u0_prime: u0p,
        ell0_plus,
        ell0_minus,
        alpha0_prime: alpha0_prime(u0p),
        h_prime: h_prime(setup, &wave),
        bound_ell,
        bound_alpha,
        h_prime_ceiling: -(1.0 - ell0_plus).min(1.0 - ell0_minus),
    })
}

/// Lower bound on the closing rate `−h′` when `|α_0| < π/6`, for gap `m` and
/// maximal center distance `big_m`.
pub fn closing_rate(m: f64, big_m: f64) -> f64 {
    3f64.sqrt() * m / (2.0 * (big_m + 1.0) * (2.0 * m + 1.0))
}

/// Largest `|α_0|` covered by the analysis.
pub const ALPHA0_LIMIT: f64 = PI / 6.0;
