//! Periodic orbits over symbolic scatterer sequences.
//!
//! An orbit is found as a critical point of the length functional
//! `L(φ_0..φ_{N−1}) = Σ |Q_{k+1} − Q_k|`; stationarity in `φ_k` is exactly
//! the reflection law at `Q_k`, so any critical point whose segments stay
//! outside the disks is a genuine billiard orbit.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::{apply_b, db_du, Jacobian2, Mat2, StepData};
use crate::error::{Error, Result};
use crate::gcalc::GContext;
use crate::geometry::{
    angle_distance, is_grazing_angle, segment_clearance, wrap_2pi, wrap_pi, BilliardTable,
    Clearance, CollisionState, RigidMotion, UCoords, Vec2,
};

/// Closure tolerance `|u_N − u_0|` for an accepted orbit.
pub const CLOSURE_TOL: f64 = 1e-10;

/// Segments closer than this to tangency are reported as singular.
pub const TANGENCY_TOL: f64 = 1e-9;

/// Cyclic sequence of scatterer indices visited by an orbit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolSequence(Vec<usize>);

impl SymbolSequence {
    pub fn new(indices: Vec<usize>, scatterers: usize) -> Result<Self> {
        let n = indices.len();
        if n < 2 {
            return Err(Error::InvalidSequence(format!("period {n} < 2")));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= scatterers) {
            return Err(Error::InvalidSequence(format!(
                "scatterer {i} does not exist ({scatterers} in table)"
            )));
        }
        for k in 0..n {
            if indices[k] == indices[(k + 1) % n] {
                return Err(Error::InvalidSequence(format!(
                    "scatterer {} repeats at positions {k} and {}",
                    indices[k],
                    (k + 1) % n
                )));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Scatterer at (cyclic) position `k`.
    pub fn at(&self, k: i64) -> usize {
        self.0[k.rem_euclid(self.0.len() as i64) as usize]
    }

    pub fn rotated(&self, start: usize) -> Self {
        let n = self.0.len();
        Self((0..n).map(|k| self.0[(start + k) % n]).collect())
    }

    /// Lexicographically smallest rotation.
    pub fn canonical(&self) -> Self {
        (0..self.0.len())
            .map(|k| self.rotated(k))
            .min()
            .expect("sequence is non-empty")
    }

    /// False when the sequence repeats a shorter word.
    pub fn is_primitive(&self) -> bool {
        let n = self.0.len();
        (1..n)
            .filter(|&p| n.is_multiple_of(p))
            .all(|p| (0..n).any(|k| self.0[k] != self.0[(k + p) % n]))
    }

    pub fn count(&self, scatterer: usize) -> usize {
        self.0.iter().filter(|&&i| i == scatterer).count()
    }
}

impl fmt::Display for SymbolSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for SymbolSequence {
    type Err = Error;

    /// Parses `0-1-2` or `0,1,2` without checking it against a table.
    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .split(['-', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidSequence(format!("{p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, usize::MAX)
    }
}

/// A singular feature of an orbit: a grazing collision or a segment tangent
/// to a scatterer it does not hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Singularity {
    Collision {
        k: usize,
        margin: f64,
    },
    Tangency {
        segment: usize,
        scatterer: usize,
        clearance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub sequence: SymbolSequence,
    pub states: Vec<CollisionState>,
    /// `s_k = |Q_{k+1} − Q_k|`.
    pub s: Vec<f64>,
    /// Direction angle of segment `k`.
    pub omega: Vec<f64>,
    /// Largest per-step mismatch `|B(u_k, r_k) − u_{k+1}|`.
    pub closure_residual: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Whether the Hessian of `L` is positive definite at the solution.
    pub hessian_positive_definite: bool,
    pub singularities: Vec<Singularity>,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.states.len()
    }

    fn idx(&self, k: i64) -> usize {
        k.rem_euclid(self.period() as i64) as usize
    }

    pub fn state(&self, k: i64) -> &CollisionState {
        &self.states[self.idx(k)]
    }

    pub fn alpha(&self, k: i64) -> f64 {
        self.state(k).alpha
    }

    pub fn phis(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.phi).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.alpha).collect()
    }

    pub fn points(&self, table: &BilliardTable) -> Vec<Vec2> {
        self.states.iter().map(|s| s.point(table)).collect()
    }

    /// `u_k = (ω_k, ω_{k−1})`.
    pub fn u(&self, k: i64) -> UCoords {
        UCoords::new(self.omega[self.idx(k)], self.omega[self.idx(k - 1)])
    }

    pub fn step(&self, table: &BilliardTable, k: i64) -> StepData {
        let r = table.center(self.sequence.at(k + 1)) - table.center(self.sequence.at(k));
        StepData::new(
            self.alpha(k),
            self.alpha(k + 1),
            self.s[self.idx(k)],
            self.omega[self.idx(k)],
            r,
        )
    }

    pub fn gcontext(&self) -> Result<GContext> {
        GContext::new(self.s.clone(), self.alphas())
    }

    /// `min_k (π/2 − |α_k|)`.
    pub fn angle_margin(&self) -> f64 {
        self.states
            .iter()
            .map(|s| FRAC_PI_2 - s.alpha.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_singular(&self) -> bool {
        !self.singularities.is_empty()
    }

    /// Same orbit with collision `start` renumbered as collision 0.
    pub fn rotated(&self, start: usize) -> Self {
        let n = self.period();
        let rot = |v: &Vec<f64>| (0..n).map(|k| v[(start + k) % n]).collect();
        let shift = |k: usize| (k + n - start) % n;
        Self {
            sequence: self.sequence.rotated(start),
            states: (0..n).map(|k| self.states[(start + k) % n]).collect(),
            s: rot(&self.s),
            omega: rot(&self.omega),
            singularities: self
                .singularities
                .iter()
                .map(|s| match *s {
                    Singularity::Collision { k, margin } => Singularity::Collision {
                        k: shift(k),
                        margin,
                    },
                    Singularity::Tangency {
                        segment,
                        scatterer,
                        clearance,
                    } => Singularity::Tangency {
                        segment: shift(segment),
                        scatterer,
                        clearance,
                    },
                })
                .collect(),
            ..self.clone()
        }
    }

    /// The same orbit in a table moved by `motion` (`table` is the image).
    pub fn transformed(&self, table: &BilliardTable, motion: &RigidMotion) -> Result<Self> {
        let phis: Vec<f64> = self.phis().iter().map(|&p| motion.apply_angle(p)).collect();
        let mut out = orbit_from_phis(table, &self.sequence, &phis)?;
        out.iterations = self.iterations;
        out.hessian_positive_definite = self.hessian_positive_definite;
        out.singularities = self.singularities.clone();
        Ok(out)
    }

    /// Clearance of segment `k` to every scatterer it does not touch.
    pub fn segment_clearance(&self, table: &BilliardTable, k: usize) -> Option<Clearance> {
        let n = self.period();
        let p0 = self.states[k].point(table);
        let p1 = self.states[(k + 1) % n].point(table);
        segment_clearance(
            table,
            p0,
            p1,
            &[self.sequence.at(k as i64), self.sequence.at(k as i64 + 1)],
        )
    }

    /// Closest non-colliding approach `(segment, clearance)` over the period.
    pub fn nearest_approach(&self, table: &BilliardTable) -> Option<(usize, Clearance)> {
        (0..self.period())
            .filter_map(|k| self.segment_clearance(table, k).map(|c| (k, c)))
            .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
    }
}

/// Newton controls for the length functional.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Starting angles; defaults to bisectors of the neighbor directions.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 100,
            max_halvings: 40,
            initial: None,
        }
    }
}

impl SolveOptions {
    pub fn seeded(phis: Vec<f64>) -> Self {
        Self {
            initial: Some(phis),
            ..Self::default()
        }
    }
}

struct LengthFunctional<'a> {
    centers: Vec<Vec2>,
    _table: &'a BilliardTable,
}

impl<'a> LengthFunctional<'a> {
    fn new(table: &'a BilliardTable, seq: &SymbolSequence) -> Self {
        Self {
            centers: seq.indices().iter().map(|&i| table.center(i)).collect(),
            _table: table,
        }
    }

    fn n(&self) -> usize {
        self.centers.len()
    }

    fn points(&self, phis: &[f64]) -> Vec<Vec2> {
        self.centers
            .iter()
            .zip(phis)
            .map(|(&c, &p)| c + Vec2::from_angle(p))
            .collect()
    }

    /// Unit directions and lengths of every segment.
    fn segments(&self, q: &[Vec2]) -> (Vec<Vec2>, Vec<f64>) {
        let n = self.n();
        (0..n)
            .map(|k| {
                let d = q[(k + 1) % n] - q[k];
                let s = d.norm();
                (d * (1.0 / s), s)
            })
            .unzip()
    }

    fn gradient(&self, phis: &[f64]) -> DVector<f64> {
        let n = self.n();
        let q = self.points(phis);
        let (e, _) = self.segments(&q);
        DVector::from_fn(n, |k, _| {
            let t = Vec2::from_angle(phis[k]).perp();
            t.dot(e[(k + n - 1) % n] - e[k])
        })
    }

    fn hessian(&self, phis: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let q = self.points(phis);
        let (e, s) = self.segments(&q);
        let t: Vec<Vec2> = phis.iter().map(|&p| Vec2::from_angle(p).perp()).collect();
        let nrm: Vec<Vec2> = phis.iter().map(|&p| Vec2::from_angle(p)).collect();
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let kp = (k + 1) % n;
            let km = (k + n - 1) % n;
            let tk_e = t[k].dot(e[k]);
            let tk_em = t[k].dot(e[km]);
            h[(k, k)] += nrm[k].dot(e[k] - e[km])
                + (1.0 - tk_e * tk_e) / s[k]
                + (1.0 - tk_em * tk_em) / s[km];
            // coupling through segment k = (k, k+1)
            let c = -(t[k].dot(t[kp]) - tk_e * t[kp].dot(e[k])) / s[k];
            h[(k, kp)] += c;
            h[(kp, k)] += c;
        }
        h
    }
}

fn initial_angles(table: &BilliardTable, seq: &SymbolSequence) -> Vec<f64> {
    let n = seq.len() as i64;
    (0..n)
        .map(|k| {
            let c = table.center(seq.at(k));
            let next = (table.center(seq.at(k + 1)) - c).normalized();
            let prev = (table.center(seq.at(k - 1)) - c).normalized();
            let b = next + prev;
            if b.norm() < 1e-12 {
                next.angle()
            } else {
                b.angle()
            }
        })
        .collect()
}

/// Newton iteration for a critical point of the length functional.
///
/// Returns the converged angles, the final gradient norm, the iteration count
/// and whether the Hessian is positive definite there.
fn newton(
    table: &BilliardTable,
    seq: &SymbolSequence,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, usize, bool)> {
    let f = LengthFunctional::new(table, seq);
    let mut phis = match &opts.initial {
        Some(p) if p.len() == seq.len() => p.clone(),
        Some(p) => {
            return Err(Error::InvalidSequence(format!(
                "{} initial angles for period {}",
                p.len(),
                seq.len()
            )))
        }
        None => initial_angles(table, seq),
    };
    let mut g = f.gradient(&phis);
    let mut gnorm = g.norm();
    let mut it = 0;
    while gnorm >= opts.tolerance {
        if it == opts.max_iterations {
            return Err(Error::NoOrbit {
                iterations: it,
                residual: gnorm,
            });
        }
        it += 1;
        let h = f.hessian(&phis);
        let dir = match h.clone().lu().solve(&(-&g)) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => -&g,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = phis
                .iter()
                .zip(dir.iter())
                .map(|(p, d)| p + lambda * d)
                .collect();
            let gt = f.gradient(&trial);
            let nt = gt.norm();
            if nt.is_finite() && nt <= (1.0 - 1e-4 * lambda) * gnorm {
                phis = trial;
                g = gt;
                gnorm = nt;
                accepted = true;
                break;
            }
            log::trace!("reject lambda {lambda}: {nt} vs {gnorm}");
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoOrbit {
                iterations: it,
                residual: gnorm,
            });
        }
    }
    let pd = f.hessian(&phis).cholesky().is_some();
    Ok((phis.into_iter().map(wrap_2pi).collect(), gnorm, it, pd))
}

/// Orbit data derived from collision angles, without admissibility checks.
pub fn orbit_from_phis(
    table: &BilliardTable,
    seq: &SymbolSequence,
    phis: &[f64],
) -> Result<PeriodicOrbit> {
    let n = seq.len();
    if phis.len() != n {
        return Err(Error::InvalidSequence(format!(
            "{} angles for period {n}",
            phis.len()
        )));
    }
    let f = LengthFunctional::new(table, seq);
    let q = f.points(phis);
    let (e, s) = f.segments(&q);
    let omega: Vec<f64> = e.iter().map(|d| d.angle()).collect();
    let states = (0..n)
        .map(|k| {
            let alpha = wrap_pi(omega[(k + n - 1) % n] - phis[k] - PI);
            CollisionState::new(seq.indices()[k], phis[k], alpha)
        })
        .collect();
    let mut orbit = PeriodicOrbit {
        sequence: seq.clone(),
        states,
        s,
        omega,
        closure_residual: f64::INFINITY,
        gradient_norm: f.gradient(phis).norm(),
        iterations: 0,
        hessian_positive_definite: false,
        singularities: Vec::new(),
    };
    orbit.closure_residual = closure_residual(table, &orbit);
    Ok(orbit)
}

/// `max_k |B(u_k, r_k) − u_{k+1}|` over the period, indices mod `N`.
///
/// Each link is checked separately: chaining `B` from `u_0` alone would
/// multiply round-off by the orbit's unstable eigenvalue.
pub fn closure_residual(table: &BilliardTable, orbit: &PeriodicOrbit) -> f64 {
    let n = orbit.period() as i64;
    (0..n)
        .map(|k| {
            let r = table.center(orbit.sequence.at(k + 1)) - table.center(orbit.sequence.at(k));
            apply_b(orbit.u(k), r).map_or(f64::INFINITY, |u| u.distance(&orbit.u(k + 1)))
        })
        .fold(0.0, f64::max)
}

/// Admissibility verdict of a critical point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Admissibility {
    pub violations: Vec<String>,
    pub singularities: Vec<Singularity>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_admissibility(table: &BilliardTable, orbit: &PeriodicOrbit) -> Admissibility {
    let mut out = Admissibility::default();
    let n = orbit.period();
    for k in 0..n {
        let st = &orbit.states[k];
        // outgoing ray must leave the disk; a pass-through satisfies the
        // reflection law's tangential condition too
        let outward = Vec2::from_angle(orbit.omega[k]).dot(st.normal());
        if outward <= 0.0 {
            out.violations.push(format!(
                "collision {k} does not reflect (passes through scatterer {})",
                st.scatterer
            ));
        } else if angle_distance(orbit.omega[k], st.phi - st.alpha) > 1e-8 {
            out.violations
                .push(format!("collision {k} violates the reflection law"));
        }
        if is_grazing_angle(st.alpha) {
            out.singularities.push(Singularity::Collision {
                k,
                margin: FRAC_PI_2 - st.alpha.abs(),
            });
        }
        if let Some(c) = orbit.segment_clearance(table, k) {
            if c.distance < 1.0 - TANGENCY_TOL {
                out.violations.push(format!(
                    "segment {k} crosses scatterer {} (clearance {})",
                    c.scatterer, c.distance
                ));
            } else if c.distance <= 1.0 + TANGENCY_TOL {
                out.singularities.push(Singularity::Tangency {
                    segment: k,
                    scatterer: c.scatterer,
                    clearance: c.distance,
                });
            }
        }
    }
    out
}

/// Critical point of the length functional with derived data, closure and
/// singularities filled in but no admissibility verdict.
pub fn solve_critical(
    table: &BilliardTable,
    seq: &SymbolSequence,
    opts: &SolveOptions,
) -> Result<(PeriodicOrbit, Admissibility)> {
    if let Some(&i) = seq.indices().iter().find(|&&i| i >= table.len()) {
        return Err(Error::InvalidSequence(format!(
            "scatterer {i} is not in the table"
        )));
    }
    let (phis, gnorm, iterations, pd) = newton(table, seq, opts)?;
    let mut orbit = orbit_from_phis(table, seq, &phis)?;
    orbit.gradient_norm = gnorm;
    orbit.iterations = iterations;
    orbit.hessian_positive_definite = pd;
    let adm = check_admissibility(table, &orbit);
    orbit.singularities = adm.singularities.clone();
    Ok((orbit, adm))
}

pub fn solve_periodic(table: &BilliardTable, seq: &SymbolSequence) -> Result<PeriodicOrbit> {
    solve_periodic_with(table, seq, &SolveOptions::default())
}

/// Periodic orbit realizing `seq`.
///
/// Errors with `Inadmissible` when the critical point is not a billiard orbit
/// and `NoOrbit` when Newton fails or the orbit does not close. Grazing
/// collisions and tangencies are reported in `singularities`.
pub fn solve_periodic_with(
    table: &BilliardTable,
    seq: &SymbolSequence,
    opts: &SolveOptions,
) -> Result<PeriodicOrbit> {
    let (orbit, adm) = solve_critical(table, seq, opts)?;
    if !adm.is_admissible() {
        return Err(Error::Inadmissible(adm.violations.join("; ")));
    }
    if !(orbit.closure_residual < CLOSURE_TOL) && !orbit.is_singular() {
        return Err(Error::NoOrbit {
            iterations: orbit.iterations,
            residual: orbit.closure_residual,
        });
    }
    Ok(orbit)
}

/// `du_k/du_j` from the closed form in `G`, for `j < k` (cyclic indices).
pub fn multi_step_jacobian(orbit: &PeriodicOrbit, j: i64, k: i64) -> Result<Jacobian2> {
    if j >= k {
        return Err(Error::Domain(format!(
            "du_k/du_j needs j < k, got ({j}, {k})"
        )));
    }
    let ctx = orbit.gcontext().map_err(|_| Error::UnboundedJacobian {
        alpha: orbit
            .states
            .iter()
            .map(|s| s.alpha.abs())
            .fold(0.0, f64::max),
    })?;
    multi_step_from_context(&ctx, j, k)
}

pub fn multi_step_from_context(ctx: &GContext, j: i64, k: i64) -> Result<Jacobian2> {
    let (cj, ck) = (ctx.cos_alpha(j), ctx.cos_alpha(k));
    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
    let m = Mat2::new(
        ctx.g(j, k)?,
        cj * ctx.g(j + 1, k)?,
        -ck * ctx.g(j, k - 1)?,
        -cj * ck * ctx.g(j + 1, k - 1)?,
    );
    Ok(m.scale(sign / ctx.pcos(j + 1, k + 1)))
}

/// `du_k/du_j` as the ordered product of single-step Jacobians.
pub fn jacobian_product(
    table: &BilliardTable,
    orbit: &PeriodicOrbit,
    j: i64,
    k: i64,
) -> Result<Jacobian2> {
    (j..k).try_fold(Mat2::IDENTITY, |acc, i| {
        Ok(db_du(&orbit.step(table, i))? * acc)
    })
}

/// Filters for orbit enumeration.
#[derive(Debug, Clone, Default)]
pub struct OrbitFilters {
    /// Keep orbits with a segment passing at clearance in `(1, 1 + δ)`.
    pub near_delta: Option<f64>,
    /// Restrict the near-approach test to one scatterer.
    pub near_scatterer: Option<usize>,
    /// Keep orbits that hit scatterer 0 exactly once per period.
    pub single_hit_0: bool,
    /// Keep orbits whose collision with scatterer 0 has `|α_0|` below this.
    pub alpha0_max: Option<f64>,
}

impl OrbitFilters {
    /// The hypotheses of the grazing perturbation argument.
    pub fn grazing_hypotheses(delta: f64) -> Self {
        Self {
            near_delta: Some(delta),
            near_scatterer: Some(0),
            single_hit_0: true,
            alpha0_max: Some(PI / 6.0),
        }
    }

    pub fn accepts(&self, table: &BilliardTable, orbit: &PeriodicOrbit) -> bool {
        if self.single_hit_0 && orbit.sequence.count(0) != 1 {
            return false;
        }
        if let Some(max) = self.alpha0_max {
            match orbit.states.iter().find(|s| s.scatterer == 0) {
                Some(s) if s.alpha.abs() < max => {}
                _ => return false,
            }
        }
        if let Some(delta) = self.near_delta {
            let near = near_approaches(table, orbit, self.near_scatterer)
                .any(|(_, c)| c.distance > 1.0 && c.distance < 1.0 + delta);
            if !near {
                return false;
            }
        }
        true
    }
}

/// Every `(segment, clearance)` to a non-endpoint scatterer, optionally
/// restricted to one scatterer.
pub fn near_approaches<'a>(
    table: &'a BilliardTable,
    orbit: &'a PeriodicOrbit,
    scatterer: Option<usize>,
) -> impl Iterator<Item = (usize, Clearance)> + 'a {
    let n = orbit.period();
    let pts = orbit.points(table);
    (0..n).filter_map(move |k| {
        let ends = [orbit.sequence.at(k as i64), orbit.sequence.at(k as i64 + 1)];
        let mut skip: Vec<usize> = ends.to_vec();
        if let Some(t) = scatterer {
            if ends.contains(&t) {
                return None;
            }
            skip.extend((0..table.len()).filter(|&i| i != t));
        }
        segment_clearance(table, pts[k], pts[(k + 1) % n], &skip).map(|c| (k, c))
    })
}

#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub orbits: Vec<PeriodicOrbit>,
    /// Sequences that were tried and rejected, with the reason.
    pub failures: Vec<(SymbolSequence, String)>,
}

/// All primitive cyclic sequences with periods `2..=max_period`, one
/// representative per rotation class, in canonical order.
pub fn cyclic_sequences(scatterers: usize, max_period: usize) -> Vec<SymbolSequence> {
    fn extend(word: &mut Vec<usize>, len: usize, n: usize, out: &mut Vec<SymbolSequence>) {
        if word.len() == len {
            if word[0] != word[len - 1] {
                let s = SymbolSequence(word.clone());
                if s.is_primitive() && s.canonical() == s {
                    out.push(s);
                }
            }
            return;
        }
        for i in 0..n {
            if word.last() != Some(&i) && i >= word[0] {
                word.push(i);
                extend(word, len, n, out);
                word.pop();
            }
        }
    }
    let mut out = Vec::new();
    for len in 2..=max_period {
        for first in 0..scatterers {
            extend(&mut vec![first], len, scatterers, &mut out);
        }
    }
    out
}

pub fn enumerate_orbits(
    table: &BilliardTable,
    max_period: usize,
    filters: &OrbitFilters,
) -> Result<Enumeration> {
    if max_period < 2 {
        return Err(Error::Domain(format!("max period {max_period} < 2")));
    }
    let mut out = Enumeration::default();
    for seq in cyclic_sequences(table.len(), max_period) {
        match solve_periodic(table, &seq) {
            Ok(o) if o.is_singular() => out.failures.push((seq, "singular".into())),
            Ok(o) if filters.accepts(table, &o) => out.orbits.push(o),
            Ok(_) => out.failures.push((seq, "filtered".into())),
            Err(e) => out.failures.push((seq, e.to_string())),
        }
    }
    log::debug!(
        "enumerated {} orbits, {} rejected",
        out.orbits.len(),
        out.failures.len()
    );
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    k: usize,
    scatterer: usize,
    phi: f64,
    alpha: f64,
    omega: f64,
    s: f64,
}

/// Write `k, scatterer, phi, alpha, omega, s` rows.
pub fn write_orbit_csv<W: io::Write>(orbit: &PeriodicOrbit, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (k, st) in orbit.states.iter().enumerate() {
        wtr.serialize(CsvRow {
            k,
            scatterer: st.scatterer,
            phi: st.phi,
            alpha: st.alpha,
            omega: orbit.omega[k],
            s: orbit.s[k],
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rebuild an orbit from CSV; the stored `α, ω, s` must match the geometry.
pub fn read_orbit_csv<R: io::Read>(table: &BilliardTable, r: R) -> Result<PeriodicOrbit> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows: Vec<CsvRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let seq = SymbolSequence::new(rows.iter().map(|r| r.scatterer).collect(), table.len())?;
    let phis: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    let mut orbit = orbit_from_phis(table, &seq, &phis)?;
    for (k, row) in rows.iter().enumerate() {
        let bad = row.k != k
            || (row.alpha - orbit.states[k].alpha).abs() > 1e-9
            || angle_distance(row.omega, orbit.omega[k]) > 1e-9
            || (row.s - orbit.s[k]).abs() > 1e-9;
        if bad {
            return Err(Error::InvalidState(format!(
                "csv row {k} is inconsistent with the table geometry"
            )));
        }
    }
    orbit.singularities = check_admissibility(table, &orbit).singularities;
    Ok(orbit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(c: &[(f64, f64)]) -> BilliardTable {
        BilliardTable::new(c.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    fn seq(i: &[usize], n: usize) -> SymbolSequence {
        SymbolSequence::new(i.to_vec(), n).unwrap()
    }

    #[test]
    fn sequence_validation() {
        assert!(SymbolSequence::new(vec![0], 3).is_err());
        assert!(SymbolSequence::new(vec![0, 1, 1], 3).is_err());
        assert!(SymbolSequence::new(vec![0, 1, 0], 3).is_err());
        assert!(SymbolSequence::new(vec![0, 5], 3).is_err());
        let s: SymbolSequence = "2-0-1".parse().unwrap();
        assert_eq!(s.canonical().to_string(), "0-1-2");
        assert!(!seq(&[0, 1, 0, 1], 2).is_primitive());
        assert!(seq(&[0, 1, 0, 2], 3).is_primitive());
    }

    #[test]
    fn axial_orbit() {
        let t = table(&[(0.0, 0.0), (4.0, 0.0)]);
        let o = solve_periodic(&t, &seq(&[0, 1], 2)).unwrap();
        assert_abs_diff_eq!(o.states[0].phi, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.states[1].phi, PI, epsilon = 1e-14);
        for k in 0..2 {
            assert_abs_diff_eq!(o.states[k].alpha, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(o.s[k], 2.0, epsilon = 1e-14);
        }
        assert!(o.closure_residual < 1e-12);
        assert!(o.hessian_positive_definite);
    }

    #[test]
    fn symmetric_triangle_orbit() {
        // side 4: by symmetry each bounce point lies on the ray from the
        // disk center to the centroid, and the incidence angle is half the
        // 60° angle between the two neighboring centers.
        let h = 4.0 * 3f64.sqrt() / 2.0;
        let t = table(&[(0.0, 0.0), (4.0, 0.0), (2.0, h)]);
        let o = solve_periodic(&t, &seq(&[0, 1, 2], 3)).unwrap();
        let s_expected = 4.0 - 2.0 * (PI / 6.0).cos();
        for k in 0..3 {
            assert_abs_diff_eq!(o.states[k].alpha.abs(), PI / 6.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o.s[k], s_expected, epsilon = 1e-12);
        }
        assert!(o.hessian_positive_definite);
    }

    #[test]
    fn blocked_period_two_is_inadmissible() {
        // disk 2 sits on the axis between 0 and 1
        let t = table(&[(0.0, 0.0), (8.0, 0.0), (4.0, 0.5)]);
        let r = solve_periodic(&t, &seq(&[0, 1], 3));
        assert!(matches!(r, Err(Error::Inadmissible(_))));
    }

    #[test]
    fn admissibility_matches_clearance() {
        for (y, ok) in [(5.0, true), (1.5, true), (0.9, false)] {
            let t = table(&[(0.0, 0.0), (4.0, 0.0), (2.0, y)]);
            let r = solve_periodic(&t, &seq(&[0, 1], 3));
            let clearance =
                segment_clearance(&t, Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0), &[0, 1])
                    .unwrap()
                    .distance;
            assert_eq!(r.is_ok(), ok, "y = {y}");
            assert_eq!(clearance > 1.0, ok);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let t = table(&[(0.0, 0.0), (4.3, 1.2), (-1.0, 5.1), (-4.6, -0.8)]);
        let s = seq(&[0, 1, 2, 3], 4);
        let f = LengthFunctional::new(&t, &s);
        let phis = vec![0.3, 2.0, 4.1, 5.9];
        let h = f.hessian(&phis);
        let eps = 1e-6;
        for j in 0..4 {
            let mut p = phis.clone();
            p[j] += eps;
            let gp = f.gradient(&p);
            p[j] -= 2.0 * eps;
            let gm = f.gradient(&p);
            for i in 0..4 {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                assert!(
                    (fd - h[(i, j)]).abs() < 1e-7,
                    "H[{i},{j}] {} vs {fd}",
                    h[(i, j)]
                );
            }
        }
    }

    #[test]
    fn multi_step_jacobian_on_generic_orbit() {
        let t = table(&[
            (0.0, 0.0),
            (4.3, 1.2),
            (-1.0, 5.1),
            (-4.6, -0.8),
            (1.5, -4.8),
        ]);
        let o = solve_periodic(&t, &seq(&[0, 1, 2, 3, 4], 5)).unwrap();
        let n = o.period() as i64;
        for j in 0..n {
            for k in j + 1..=n {
                let a = multi_step_jacobian(&o, j, k).unwrap();
                let b = jacobian_product(&t, &o, j, k).unwrap();
                assert!(a.rel_diff(&b) < 1e-10, "({j},{k})");
                let det = o.alpha(j).cos() / o.alpha(k).cos();
                // cancellation in the 2×2 determinant scales with the entries squared
                assert!((a.det() - det).abs() < 1e-12 * a.max_abs().powi(2));
            }
        }
        let one = multi_step_jacobian(&o, 2, 3).unwrap();
        assert!(one.rel_diff(&db_du(&o.step(&t, 2)).unwrap()) < 1e-13);
    }

    #[test]
    fn enumerate_two_disks() {
        let t = table(&[(0.0, 0.0), (4.0, 0.0)]);
        let e = enumerate_orbits(&t, 2, &OrbitFilters::default()).unwrap();
        assert_eq!(e.orbits.len(), 1);
        assert_eq!(e.orbits[0].sequence.to_string(), "0-1");
    }

    #[test]
    fn near_tangency_filter() {
        let r = 0.05;
        let t = table(&[(0.0, 0.0), (4.0, 0.0), (2.0, 1.0 + r)]);
        let o = solve_periodic(&t, &seq(&[0, 1], 3)).unwrap();
        let (_, c) = o.nearest_approach(&t).unwrap();
        assert_eq!(c.scatterer, 2);
        assert!((c.distance - 1.05).abs() < 1e-9);
        let f = OrbitFilters {
            near_delta: Some(0.1),
            ..Default::default()
        };
        assert!(f.accepts(&t, &o));
        let f = OrbitFilters {
            near_delta: Some(0.01),
            ..Default::default()
        };
        assert!(!f.accepts(&t, &o));
    }

    #[test]
    fn alpha0_filter_on_triangle() {
        let h = 4.0 * 3f64.sqrt() / 2.0;
        let t = table(&[(0.0, 0.0), (4.0, 0.0), (2.0, h)]);
        let o = solve_periodic(&t, &seq(&[0, 1, 2], 3)).unwrap();
        let strict = OrbitFilters {
            alpha0_max: Some(PI / 6.0),
            ..Default::default()
        };
        // |α| = π/6 exactly is not strictly below the bound
        assert_eq!(strict.accepts(&t, &o), o.states[0].alpha.abs() < PI / 6.0);
        let loose = OrbitFilters {
            alpha0_max: Some(PI / 6.0 + 1e-6),
            ..Default::default()
        };
        assert!(loose.accepts(&t, &o));
    }

    #[test]
    fn csv_round_trip() {
        let t = table(&[(0.0, 0.0), (4.3, 1.2), (-1.0, 5.1)]);
        let o = solve_periodic(&t, &seq(&[0, 1, 2], 3)).unwrap();
        let mut buf = Vec::new();
        write_orbit_csv(&o, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,scatterer,phi,alpha,omega,s\n"));
        let back = read_orbit_csv(&t, buf.as_slice()).unwrap();
        assert_eq!(back.sequence, o.sequence);
        for k in 0..3 {
            assert!((back.states[k].alpha - o.states[k].alpha).abs() < 1e-12);
        }
        assert!(back.closure_residual < 1e-10);
    }

    #[test]
    fn cyclic_sequence_counts() {
        // necklaces over 3 symbols without equal neighbors: 3 of length 2, 2 of length 3
        let s = cyclic_sequences(3, 3);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|q| q.canonical() == *q));
    }
}
