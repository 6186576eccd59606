//! Pushing scatterer 0 toward a nearby orbit segment until the orbit grazes.
//!
//! Each step re-aims `C_0` at the current foot point `Z` on segment `k*`,
//! moves it, and re-solves the periodic orbit from the previous solution.
//! The run ends when the clearance `h` reaches 1 (grazing at scatterer 0) or
//! another singularity appears first: a collision turning tangential or some
//! other segment touching a disk.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    closest_point_on_segment, segment_clearance, BilliardTable, Vec2, GRAZING_TOL,
};
use crate::orbits::{solve_critical, PeriodicOrbit, SolveOptions, CLOSURE_TOL};
use crate::perturbation::{closing_rate, normalize_frame, respond, ALPHA0_LIMIT};

/// Landing window for the grazing condition.
pub const LANDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationConfig {
    /// Largest allowed displacement of `C_0`.
    pub epsilon: f64,
    pub gamma_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub shrink: f64,
    pub grow: f64,
    pub grazing_tol: f64,
    pub max_steps: usize,
    /// When set, the initial clearance must be below `1 + delta`.
    pub delta: Option<f64>,
    /// Segment to close on; defaults to the nearest interior approach.
    pub k_star: Option<usize>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            gamma_step: 5e-3,
            min_step: 1e-8,
            max_step: 2e-2,
            shrink: 0.5,
            grow: 1.5,
            grazing_tol: LANDING_TOL,
            max_steps: 10_000,
            delta: None,
            k_star: None,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0 < self.min_step
            && self.min_step <= self.gamma_step
            && self.gamma_step <= self.max_step)
        {
            return bad("steps must satisfy 0 < min_step <= gamma_step <= max_step");
        }
        if !(0.0 < self.shrink && self.shrink < 1.0 && self.grow >= 1.0) {
            return bad("shrink must lie in (0, 1) and grow must be at least 1");
        }
        if !(self.grazing_tol > 2.0 * GRAZING_TOL) {
            return bad("grazing tolerance is below the collision-map grazing threshold");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    GrazingAtScatterer0,
    GrazingElsewhere,
    StepLimit,
    SolverFailure,
    EpsilonExceeded,
}

impl Outcome {
    pub fn is_grazing(self) -> bool {
        matches!(
            self,
            Outcome::GrazingAtScatterer0 | Outcome::GrazingElsewhere
        )
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::GrazingAtScatterer0 => "grazing-at-scatterer-0",
            Outcome::GrazingElsewhere => "grazing-elsewhere",
            Outcome::StepLimit => "step-limit",
            Outcome::SolverFailure => "solver-failure",
            Outcome::EpsilonExceeded => "epsilon-exceeded",
        })
    }
}

/// Where a grazing singularity sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrazingSite {
    /// Segment `k*` tangent to scatterer 0.
    Scatterer0 { segment: usize },
    /// Collision `k` tangential.
    Collision { k: usize },
    /// Segment tangent to another scatterer.
    Segment { segment: usize, scatterer: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub gamma: f64,
    pub c0: Vec2,
    pub h: f64,
    pub alpha0: f64,
    pub ell0_plus: f64,
    pub ell0_minus: f64,
    pub h_prime: f64,
    /// `min_k (π/2 − |α_k|)`.
    pub min_margin: f64,
    pub closure: f64,
    /// Foot point of `C_0` on segment `k*`.
    pub z: Vec2,
    /// Orbit angles `φ_k`, for redrawing the step.
    #[serde(skip)]
    pub phis: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationTrace {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub site: Option<GrazingSite>,
    pub note: Option<String>,
    pub k_star: usize,
    pub epsilon: f64,
    /// Minimum gap `m_0` and maximal center distance `M_0` of the initial table.
    pub m0: f64,
    pub big_m0: f64,
    pub initial_table: BilliardTable,
    pub final_table: BilliardTable,
    pub final_orbit: PeriodicOrbit,
}

impl ContinuationTrace {
    pub fn gamma(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.gamma)
    }

    /// `|C_0(γ_end) − C_0(0)|`.
    pub fn displacement(&self) -> f64 {
        self.final_table
            .center(0)
            .distance(self.initial_table.center(0))
    }

    /// Realized `δ = h(0) − 1`.
    pub fn delta(&self) -> f64 {
        self.steps[0].h - 1.0
    }

    /// Worst-case closing rate `L` at parameter `γ`.
    pub fn rate_bound(&self, gamma: f64) -> f64 {
        closing_rate(self.m0 - gamma, self.big_m0 + gamma)
    }

    pub fn h_decreasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].h < w[0].h)
    }

    /// Every secant `Δh/Δγ` is below `−L(γ)` for the worst-case gap at the
    /// end of the step.
    pub fn rate_holds(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| (w[1].h - w[0].h) / (w[1].gamma - w[0].gamma) < -self.rate_bound(w[1].gamma))
    }

    pub fn alpha0_within_limit(&self) -> bool {
        self.steps.iter().all(|s| s.alpha0.abs() < ALPHA0_LIMIT)
    }

    /// `|α_0(γ)| < |α_0(0)| + 3γ/(m_0 − γ)` at every step.
    pub fn alpha0_drift_holds(&self) -> bool {
        let a0 = self.steps[0].alpha0.abs();
        self.steps[1..]
            .iter()
            .all(|s| s.alpha0.abs() < a0 + 3.0 / (self.m0 - s.gamma) * s.gamma)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "gamma",
            "c0_x",
            "c0_y",
            "h",
            "alpha0",
            "ell0_plus",
            "ell0_minus",
            "h_prime",
            "min_margin",
            "closure",
        ])?;
        for s in &self.steps {
            wtr.write_record(
                [
                    s.gamma,
                    s.c0.x,
                    s.c0.y,
                    s.h,
                    s.alpha0,
                    s.ell0_plus,
                    s.ell0_minus,
                    s.h_prime,
                    s.min_margin,
                    s.closure,
                ]
                .iter()
                .map(|v| v.to_string()),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Distances to every singularity of a critical point; negative values mean
/// the singularity has been crossed.
#[derive(Debug, Clone, Copy)]
struct Events {
    h: f64,
    /// Foot direction from `C_0` to segment `k*`.
    toward: Vec2,
    margin: (f64, usize),
    other: (f64, usize, usize),
}

impl Events {
    fn measure(table: &BilliardTable, orbit: &PeriodicOrbit, k_star: usize) -> Self {
        let n = orbit.period();
        let pts = orbit.points(table);
        let c0 = table.center(0);
        let (foot, _) = closest_point_on_segment(c0, pts[k_star], pts[(k_star + 1) % n]);
        let margin = orbit
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| (FRAC_PI_2 - s.alpha.abs(), k))
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
        let mut other = (f64::INFINITY, 0, 0);
        for k in 0..n {
            let mut skip = vec![orbit.sequence.at(k as i64), orbit.sequence.at(k as i64 + 1)];
            if k == k_star {
                skip.push(0);
            }
            if let Some(c) = segment_clearance(table, pts[k], pts[(k + 1) % n], &skip) {
                if c.distance - 1.0 < other.0 {
                    other = (c.distance - 1.0, k, c.scatterer);
                }
            }
        }
        Events {
            h: c0.distance(foot),
            toward: (foot - c0).normalized(),
            margin,
            other,
        }
    }

    /// Smallest signed distance to a singularity and where it is.
    fn nearest(&self, k_star: usize) -> (f64, GrazingSite) {
        let mut best = (self.h - 1.0, GrazingSite::Scatterer0 { segment: k_star });
        if self.margin.0 < best.0 {
            best = (self.margin.0, GrazingSite::Collision { k: self.margin.1 });
        }
        if self.other.0 < best.0 {
            best = (
                self.other.0,
                GrazingSite::Segment {
                    segment: self.other.1,
                    scatterer: self.other.2,
                },
            );
        }
        best
    }
}

enum Trial {
    /// Regular orbit short of any singularity.
    Clear(PeriodicOrbit, Events),
    /// Within the landing window of a singularity.
    Landed(PeriodicOrbit, Events, GrazingSite),
    /// A singularity was crossed.
    Crossed,
    /// Newton failed or the orbit does not close.
    Failed(String),
}

fn try_table(table: &BilliardTable, seed: &PeriodicOrbit, k_star: usize, tol: f64) -> Trial {
    let opts = SolveOptions::seeded(seed.phis());
    let (orbit, _) = match solve_critical(table, &seed.sequence, &opts) {
        Ok(r) => r,
        Err(e) => return Trial::Failed(e.to_string()),
    };
    let ev = Events::measure(table, &orbit, k_star);
    let (dist, site) = ev.nearest(k_star);
    // a crossed tangency makes the critical point pass through a disk, which
    // the admissibility checks see as a violation rather than an error
    if dist < 0.0 {
        return Trial::Crossed;
    }
    // the collision map refuses angles within GRAZING_TOL of tangency
    let floor = if matches!(site, GrazingSite::Collision { .. }) {
        2.0 * GRAZING_TOL
    } else {
        0.0
    };
    if dist <= floor {
        return Trial::Crossed;
    }
    if !(orbit.closure_residual < CLOSURE_TOL) {
        return Trial::Failed(format!("closure residual {:e}", orbit.closure_residual));
    }
    let adm = crate::orbits::check_admissibility(table, &orbit);
    if !adm.is_admissible() {
        return Trial::Failed(adm.violations.join("; "));
    }
    if dist < tol {
        Trial::Landed(orbit, ev, site)
    } else {
        Trial::Clear(orbit, ev)
    }
}

fn alpha0_ok(orbit: &PeriodicOrbit) -> bool {
    orbit
        .states
        .iter()
        .all(|s| s.scatterer != 0 || s.alpha.abs() < ALPHA0_LIMIT)
}

fn record(
    table: &BilliardTable,
    orbit: &PeriodicOrbit,
    k_star: usize,
    gamma: f64,
    ev: &Events,
) -> Result<TraceStep> {
    let setup = normalize_frame(table, orbit, Some(k_star), None)?;
    let rep = respond(&setup)?;
    Ok(TraceStep {
        gamma,
        c0: table.center(0),
        h: ev.h,
        alpha0: rep.alpha0,
        ell0_plus: rep.ell0_plus,
        ell0_minus: rep.ell0_minus,
        h_prime: rep.h_prime,
        min_margin: ev.margin.0,
        closure: orbit.closure_residual,
        z: table.center(0) + ev.toward * ev.h,
        phis: orbit.phis(),
    })
}

/// Drive scatterer 0 toward segment `k*` until a singularity occurs.
pub fn run(
    table: &BilliardTable,
    orbit: &PeriodicOrbit,
    config: &ContinuationConfig,
) -> Result<ContinuationTrace> {
    config.validate()?;
    let setup = normalize_frame(table, orbit, config.k_star, config.delta)?;
    // back to the caller's collision numbering
    let k_star = (setup.k_star + setup.shift) % orbit.period();
    let tol = config.grazing_tol;

    let mut table_cur = table.clone();
    let mut orbit_cur = orbit.clone();
    let mut ev = Events::measure(table, orbit, k_star);
    let mut gamma = 0.0;
    let mut steps = vec![record(table, orbit, k_star, 0.0, &ev)?];
    let mut step = config.gamma_step;
    let mut outcome = None;
    let mut site = None;
    let mut note = None;

    while outcome.is_none() {
        if steps.len() > config.max_steps {
            outcome = Some(Outcome::StepLimit);
            break;
        }
        let budget = config.epsilon - gamma;
        if budget <= 0.0 {
            outcome = Some(Outcome::EpsilonExceeded);
            break;
        }
        let dir = ev.toward;
        let at = |s: f64| table_cur.with_center(0, table_cur.center(0) + dir * s);
        let mut s = step.min(budget);
        match try_table(&at(s)?, &orbit_cur, k_star, tol) {
            Trial::Clear(o, e) if e.h < ev.h && alpha0_ok(&o) => {
                table_cur = at(s)?;
                orbit_cur = o;
                ev = e;
                gamma += s;
                steps.push(record(&table_cur, &orbit_cur, k_star, gamma, &ev)?);
                step = (step * config.grow).min(config.max_step);
            }
            Trial::Landed(o, e, where_) => {
                table_cur = at(s)?;
                orbit_cur = o;
                ev = e;
                gamma += s;
                steps.push(record(&table_cur, &orbit_cur, k_star, gamma, &ev)?);
                site = Some(where_);
            }
            Trial::Crossed => {
                // bisect the step between the last clear point and the crossing
                let (mut lo, mut hi) = (0.0, s);
                let mut landed = None;
                for _ in 0..200 {
                    s = 0.5 * (lo + hi);
                    match try_table(&at(s)?, &orbit_cur, k_star, tol) {
                        Trial::Clear(..) => lo = s,
                        Trial::Crossed => hi = s,
                        Trial::Landed(o, e, w) => {
                            landed = Some((o, e, w));
                            break;
                        }
                        Trial::Failed(why) => {
                            note = Some(format!("bisection failed at step {s:e}: {why}"));
                            break;
                        }
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                match landed {
                    Some((o, e, w)) => {
                        table_cur = at(s)?;
                        orbit_cur = o;
                        ev = e;
                        gamma += s;
                        steps.push(record(&table_cur, &orbit_cur, k_star, gamma, &ev)?);
                        site = Some(w);
                    }
                    None => {
                        note.get_or_insert_with(|| {
                            "bisection did not land on the singularity".into()
                        });
                        outcome = Some(Outcome::SolverFailure);
                    }
                }
            }
            rejected => {
                note = Some(match rejected {
                    Trial::Failed(why) => why,
                    _ => "step did not decrease h or broke the |α_0| limit".into(),
                });
                step *= config.shrink;
                if step < config.min_step {
                    outcome = Some(Outcome::SolverFailure);
                }
            }
        }
        if let Some(w) = site {
            // on retracing orbits the reversed copy of segment k* may touch
            // scatterer 0 first; that is still a grazing collision with it
            outcome = Some(match w {
                GrazingSite::Scatterer0 { .. } | GrazingSite::Segment { scatterer: 0, .. } => {
                    Outcome::GrazingAtScatterer0
                }
                _ => Outcome::GrazingElsewhere,
            });
            note = None;
        }
    }

    Ok(ContinuationTrace {
        steps,
        outcome: outcome.expect("loop exits with an outcome"),
        site,
        note,
        k_star,
        epsilon: config.epsilon,
        m0: table.min_gap(),
        big_m0: table.max_center_distance(),
        initial_table: table.clone(),
        final_table: table_cur,
        final_orbit: orbit_cur,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub outcome: Outcome,
    pub site: GrazingSite,
    pub gamma: f64,
    pub displacement: f64,
    pub epsilon: f64,
    pub h: f64,
    pub min_margin: f64,
    /// Distance to the certified singularity.
    pub grazing_distance: f64,
    pub closure: f64,
    pub delta: f64,
    pub rate_bound: f64,
    pub final_centers: Vec<Vec2>,
}

/// Re-verify the end state of a grazing trace from scratch.
pub fn certify(trace: &ContinuationTrace) -> Result<Certificate> {
    let invalid = |m: String| Err(Error::InvalidTrace(m));
    if !trace.outcome.is_grazing() {
        return invalid(format!(
            "outcome {} is not a grazing outcome",
            trace.outcome
        ));
    }
    let Some(site) = trace.site else {
        return invalid("grazing trace without a grazing site".into());
    };
    let table = &trace.final_table;
    let (orbit, _) = solve_critical(
        table,
        &trace.final_orbit.sequence,
        &SolveOptions::seeded(trace.final_orbit.phis()),
    )?;
    if !(orbit.closure_residual < CLOSURE_TOL) {
        return invalid(format!(
            "final closure residual {:e}",
            orbit.closure_residual
        ));
    }
    let ev = Events::measure(table, &orbit, trace.k_star);
    let dist = match site {
        GrazingSite::Scatterer0 { .. } => ev.h - 1.0,
        GrazingSite::Collision { k } => FRAC_PI_2 - orbit.states[k].alpha.abs(),
        GrazingSite::Segment { segment, scatterer } => {
            let pts = orbit.points(table);
            let n = orbit.period();
            let skip: Vec<usize> = (0..table.len()).filter(|&i| i != scatterer).collect();
            segment_clearance(table, pts[segment], pts[(segment + 1) % n], &skip)
                .map_or(f64::INFINITY, |c| c.distance - 1.0)
        }
    };
    if !(dist.abs() < LANDING_TOL) {
        return invalid(format!("final state is {dist:e} away from grazing"));
    }
    let displacement = trace.displacement();
    if !(displacement <= trace.epsilon) {
        return invalid(format!(
            "displacement {displacement} exceeds epsilon {}",
            trace.epsilon
        ));
    }
    Ok(Certificate {
        outcome: trace.outcome,
        site,
        gamma: trace.gamma(),
        displacement,
        epsilon: trace.epsilon,
        h: ev.h,
        min_margin: ev.margin.0,
        grazing_distance: dist,
        closure: orbit.closure_residual,
        delta: trace.delta(),
        rate_bound: trace.rate_bound(trace.gamma()),
        final_centers: table.centers().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{grazing_scene, rng};

    #[test]
    fn config_validation() {
        assert!(ContinuationConfig::default().validate().is_ok());
        let bad = ContinuationConfig {
            min_step: 1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn runs_to_grazing_and_certifies() {
        let sc = grazing_scene(&mut rng(17), 0.02..0.04);
        let trace = run(&sc.table, &sc.orbit, &ContinuationConfig::default()).unwrap();
        assert!(
            trace.outcome.is_grazing(),
            "{:?} {:?}",
            trace.outcome,
            trace.note
        );
        assert!(trace.h_decreasing());
        assert!(trace.alpha0_within_limit());
        let cert = certify(&trace).unwrap();
        assert!(cert.grazing_distance.abs() < LANDING_TOL);
        assert!(cert.displacement <= 0.1);
    }

    #[test]
    fn step_limit_is_not_certified() {
        let sc = grazing_scene(&mut rng(17), 0.02..0.04);
        let cfg = ContinuationConfig {
            max_steps: 1,
            gamma_step: 1e-4,
            ..Default::default()
        };
        let trace = run(&sc.table, &sc.orbit, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::StepLimit);
        assert!(matches!(certify(&trace), Err(Error::InvalidTrace(_))));
    }

    #[test]
    fn tiny_epsilon_is_exceeded() {
        let sc = grazing_scene(&mut rng(17), 0.02..0.04);
        let cfg = ContinuationConfig {
            epsilon: 1e-3,
            gamma_step: 1e-4,
            ..Default::default()
        };
        let trace = run(&sc.table, &sc.orbit, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::EpsilonExceeded);
        assert!(trace.gamma() <= 1e-3 + 1e-15);
    }
}
