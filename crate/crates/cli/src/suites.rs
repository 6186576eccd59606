//! Seeded oracle suites shared by `graze verify`, `graze perturb` and the
//! acceptance target. Each suite returns named checks with their tolerances.

use std::f64::consts::TAU;

use graze::collision::{db_dr, db_du, df_dstate, Mat2, U_FROM_ALPHA_PHI};
use graze::geometry::{BilliardTable, RigidMotion, Vec2};
use graze::oracle::{extended, rel_err, rel_err_vec, Bracket, RESPONSE_FLOOR};
use graze::orbits::{jacobian_product, multi_step_jacobian, solve_periodic, PeriodicOrbit};
use graze::perturbation::{
    ell0_plus_decomposed, linear_system_residual, normalize_frame, propagate, respond, valley_scan,
    PerturbationSetup, ResponseReport,
};
use graze::scenes::{
    grazing_scene, random_context, random_context_with, random_orbit, random_step, rng,
    GrazingScene, SceneRng,
};
use graze::Result;
use rand::Rng;

use crate::report::Check;

/// Finite-difference steps for the Jacobian oracle.
pub const FD_STEPS: [f64; 2] = [1e-5, 1e-6];
pub const FD_REFINED: f64 = 1e-7;
pub const FD_TOL: f64 = 1e-4;
pub const DET_TOL: f64 = 1e-10;
pub const CONJUGACY_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const RECURSION_TOL: f64 = 1e-12;
pub const PRODUCT_TOL: f64 = 1e-10;
pub const LINEAR_SYSTEM_TOL: f64 = 1e-9;
pub const DECOMPOSITION_TOL: f64 = 1e-10;
pub const RESOLVE_STEP: f64 = 1e-6;
pub const INVARIANCE_TOL: f64 = 1e-10;
/// Sampled points per segment for the wave-front scans.
pub const SAMPLES_PER_SEGMENT: usize = 20;

/// Relative difference, zero when both vanish.
fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest entrywise relative difference.
fn entrywise(a: &Mat2, b: &Mat2) -> f64 {
    (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| rel(a.get(i, j), b.get(i, j)))
        .fold(0.0, f64::max)
}

/// Central-difference Jacobian at step `h`.
type FdJacobian<'a> = Box<dyn Fn(f64) -> Result<Mat2> + 'a>;

/// Analytic Jacobians against double-double central differences of the
/// ray-casting maps, plus the determinant law and the `u ↔ (α, φ)`
/// conjugacy. `corrupt` perturbs the analytic `∂B/∂u` to exercise failure
/// reporting.
pub fn jacobian_suite(seed: u64, trials: usize, corrupt: bool) -> Vec<Check> {
    let mut rng = rng(seed);
    let names = ["dF_dstate", "dB_du", "dB_dr"];
    let mut fd_err = [0.0f64; 3];
    let mut not_refined = [0usize; 3];
    let mut worst_ratio = [0.0f64; 3];
    let (mut det_err, mut conj_err) = (0.0f64, 0.0f64);
    let t = U_FROM_ALPHA_PHI;
    let t_inv = t.inverse().expect("constant map is invertible");

    for _ in 0..trials {
        let s = random_step(&mut rng, 0.05);
        let mut bu = db_du(&s.step).expect("random steps are not grazing");
        if corrupt {
            bu = bu.scale(1.0 + 1e-3);
        }
        let f = df_dstate(&s.step).expect("random steps are not grazing");
        let br = db_dr(&s.step).expect("random steps are not grazing");
        let fds: [(&Mat2, FdJacobian); 3] = [
            (
                &f,
                Box::new(|h| extended::fd_df_dstate(s.state.alpha, s.state.phi, s.r, h)),
            ),
            (&bu, Box::new(|h| extended::fd_db_du(s.u, s.r, h))),
            (&br, Box::new(|h| extended::fd_db_dr(s.u, s.r, h))),
        ];
        for (i, (a, fd)) in fds.iter().enumerate() {
            let err = |h: f64| fd(h).map_or(f64::INFINITY, |m| a.rel_diff(&m));
            let coarse: Vec<f64> = FD_STEPS.iter().map(|&h| err(h)).collect();
            fd_err[i] = coarse.iter().fold(fd_err[i], |m, &e| m.max(e));
            let (e6, e7) = (coarse[1], err(FD_REFINED));
            if !(e7 < e6) {
                not_refined[i] += 1;
            }
            worst_ratio[i] = worst_ratio[i].max(e7 / e6);
        }
        let expected = s.step.alpha_k().cos() / s.step.alpha_k1().cos();
        det_err = det_err.max(rel(bu.det(), expected));
        conj_err = conj_err.max((t * f * t_inv).rel_diff(&bu));
    }

    let mut out = Vec::new();
    for i in 0..3 {
        out.push(
            Check::below(
                format!("jacobian.{}.fd_rel_err", names[i]),
                fd_err[i],
                FD_TOL,
            )
            .with_note(format!("max over {trials} steps, h in {FD_STEPS:?}")),
        );
        out.push(
            Check::none(format!("jacobian.{}.refinement", names[i]), not_refined[i]).with_note(
                format!(
                "steps where the error did not shrink from h=1e-6 to h=1e-7; worst ratio {:.3e}",
                worst_ratio[i]
            ),
            ),
        );
    }
    out.push(Check::below("jacobian.det_law", det_err, DET_TOL));
    out.push(Check::below("jacobian.conjugacy", conj_err, CONJUGACY_TOL));
    out
}

/// Determinant and partition identities, the two recursions and the two
/// forms of `D` on random contexts with periods 2–12.
pub fn gcalc_suite(seed: u64, contexts: usize) -> Vec<Check> {
    let mut rng = rng(seed);
    let (mut det, mut part, mut flip, mut d_forms) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut d_bound, mut positivity) = (0usize, 0usize);
    for _ in 0..contexts {
        let ctx = random_context(&mut rng, 2..=12);
        let n = ctx.period() as i64;
        for j in 0..n {
            for k in j..=j + 12 {
                det = det.max(ctx.check_det_identity(j, k).unwrap().relative());
                for m in j..=k {
                    part = part.max(ctx.check_partition_identity(j, m, k).unwrap().relative());
                }
            }
            for k in j - 1..=j + 20 {
                let (a, b) = (ctx.g(j, k).unwrap(), ctx.g_flipped(j, k).unwrap());
                flip = flip.max(rel(a, b));
                if k >= j && a <= 0.0 {
                    positivity += 1;
                }
            }
        }
        d_forms = d_forms.max((ctx.d() - ctx.d_expanded()).abs() / ctx.d_scale());
        let floor = 2.0 * ctx.s(n - 1) * ctx.g(0, n - 1).unwrap();
        if !(ctx.d() > floor && floor > 0.0) {
            d_bound += 1;
        }
    }
    vec![
        Check::below("gcalc.det_identity", det, IDENTITY_TOL),
        Check::below("gcalc.partition_identity", part, IDENTITY_TOL),
        Check::below("gcalc.flipped_recursion", flip, RECURSION_TOL),
        Check::below("gcalc.d_forms", d_forms, RECURSION_TOL),
        Check::none("gcalc.d_lower_bound", d_bound),
        Check::none("gcalc.positivity", positivity),
    ]
}

/// The six inequalities on `G(j, k)` for spans 1–10; the span-1 upper
/// bounds are equalities and are compared non-strictly.
pub fn inequality_suite(seed: u64, contexts: usize) -> Vec<Check> {
    let mut rng = rng(seed);
    let mut violations = [0usize; 6];
    let mut pairs = 0;
    for _ in 0..contexts {
        let ctx = random_context_with(&mut rng, 2..=12, 0.1..10.0, 1.4);
        for j in 0..ctx.period() as i64 {
            for k in j + 1..=j + 10 {
                pairs += 1;
                for (v, ok) in violations
                    .iter_mut()
                    .zip(ctx.check_inequalities(j, k).unwrap())
                {
                    if !ok {
                        *v += 1;
                    }
                }
            }
        }
    }
    "abcdef"
        .chars()
        .zip(violations)
        .map(|(c, v)| {
            Check::none(format!("gcalc.inequality_{c}"), v).with_note(format!("{pairs} pairs"))
        })
        .collect()
}

/// Closed-form multi-step Jacobians against ordered products of one-step
/// Jacobians, for every `0 ≤ j < k ≤ N`.
pub fn product_checks(table: &BilliardTable, orbit: &PeriodicOrbit) -> (f64, f64) {
    let n = orbit.period() as i64;
    let (mut prod, mut det) = (0.0f64, 0.0f64);
    for j in 0..n {
        for k in j + 1..=n {
            let a = multi_step_jacobian(orbit, j, k).unwrap();
            let b = jacobian_product(table, orbit, j, k).unwrap();
            prod = prod.max(entrywise(&a, &b));
            // det is formed from entries of size max_abs, so its round-off
            // scales with max_abs²
            let expected = orbit.alpha(j).cos() / orbit.alpha(k).cos();
            let scale = expected.abs().max(a.max_abs().powi(2));
            det = det.max((a.det() - expected).abs() / scale);
        }
    }
    (prod, det)
}

/// Analytic one-step Jacobians along an orbit against double-double central
/// differences, and the determinant law, as `(fd_rel_err, det_rel_err)`.
pub fn orbit_step_errors(table: &BilliardTable, orbit: &PeriodicOrbit) -> Result<(f64, f64)> {
    let (mut fd, mut det) = (0.0f64, 0.0f64);
    for k in 0..orbit.period() as i64 {
        let step = orbit.step(table, k);
        let (u, r, st) = (orbit.u(k), step.r_k(), orbit.state(k));
        let bu = db_du(&step)?;
        let pairs = [
            (
                df_dstate(&step)?,
                extended::fd_df_dstate(st.alpha, st.phi, r, FD_STEPS[1])?,
            ),
            (bu, extended::fd_db_du(u, r, FD_STEPS[1])?),
            (db_dr(&step)?, extended::fd_db_dr(u, r, FD_STEPS[1])?),
        ];
        for (a, b) in &pairs {
            fd = fd.max(a.rel_diff(b));
        }
        det = det.max(rel(bu.det(), step.alpha_k().cos() / step.alpha_k1().cos()));
    }
    Ok((fd, det))
}

pub fn product_suite(seed: u64, orbits: usize) -> Vec<Check> {
    let mut rng = rng(seed);
    let (mut prod, mut det) = (0.0f64, 0.0f64);
    let mut longest = 0;
    for _ in 0..orbits {
        let (table, orbit) = random_orbit(&mut rng, 2..=12);
        longest = longest.max(orbit.period());
        let (p, d) = product_checks(&table, &orbit);
        prod = prod.max(p);
        det = det.max(d);
    }
    vec![
        Check::below("orbits.product_equivalence", prod, PRODUCT_TOL)
            .with_note(format!("{orbits} orbits, longest period {longest}")),
        Check::below("orbits.multi_step_det", det, PRODUCT_TOL),
    ]
}

/// Measured response of one scene: closed forms, their oracles and bounds.
#[derive(Debug, Clone, Default)]
pub struct ResponseErrors {
    pub linear_system: f64,
    pub decomposition: f64,
    pub u0_prime: f64,
    pub alpha0_prime: f64,
    pub ell0: f64,
    pub ell_at: f64,
    pub h_prime: f64,
}

/// Compare the closed-form response of `setup` with its oracles; the
/// re-solve oracles run only when `resolve` is set.
pub fn response_errors(
    setup: &PerturbationSetup,
    report: &ResponseReport,
    resolve: bool,
) -> Result<ResponseErrors> {
    let ctx = setup.context()?;
    let mut e = ResponseErrors {
        linear_system: linear_system_residual(setup, report.u0_prime)?,
        decomposition: (report.ell0_plus - ell0_plus_decomposed(setup, &ctx, report.u0_prime))
            .abs(),
        ..Default::default()
    };
    if !resolve {
        return Ok(e);
    }
    let b = Bracket::new(setup, RESOLVE_STEP)?;
    e.u0_prime = rel_err_vec(report.u0_prime, b.u0_prime());
    e.alpha0_prime = rel_err(report.alpha0_prime, b.alpha0_prime());
    let (fp, fm) = b.ell0();
    e.ell0 = rel_err(report.ell0_plus, fp).max(rel_err(report.ell0_minus, fm));
    e.h_prime = rel_err(report.h_prime, b.h_prime());
    // ℓ crosses zero inside segments, so pointwise errors are measured
    // against the largest |ℓ| over the period
    let wave = propagate(setup, &ctx)?;
    let scale = wave
        .sample_abs(SAMPLES_PER_SEGMENT)
        .into_iter()
        .fold(RESPONSE_FLOOR, f64::max);
    for j in 0..setup.period() {
        for q in 1..=SAMPLES_PER_SEGMENT {
            let d = wave.s[j] * q as f64 / (SAMPLES_PER_SEGMENT + 1) as f64;
            e.ell_at = e
                .ell_at
                .max((wave.ell(j, d) - b.ell_at(j, d)).abs() / scale);
        }
    }
    Ok(e)
}

/// Tallies over a batch of grazing scenes.
#[derive(Debug, Clone, Default)]
pub struct GrazingTally {
    pub scenes: usize,
    pub resolved: usize,
    pub worst: ResponseErrors,
    pub ell_bound: usize,
    pub alpha_bound: usize,
    pub h_prime: usize,
    pub h_prime_abs: usize,
    pub valley: usize,
    pub setup_failures: usize,
    /// `(h′, ℓ₀⁺, ℓ₀⁻)` of the first few scenes failing the literal
    /// inequality on `h′`.
    pub h_prime_examples: Vec<(f64, f64, f64)>,
}

impl GrazingTally {
    pub fn add(&mut self, setup: &PerturbationSetup, resolve: bool) -> Result<()> {
        let report = respond(setup)?;
        let e = response_errors(setup, &report, resolve)?;
        self.scenes += 1;
        self.resolved += resolve as usize;
        let w = &mut self.worst;
        w.linear_system = w.linear_system.max(e.linear_system);
        w.decomposition = w.decomposition.max(e.decomposition);
        w.u0_prime = w.u0_prime.max(e.u0_prime);
        w.alpha0_prime = w.alpha0_prime.max(e.alpha0_prime);
        w.ell0 = w.ell0.max(e.ell0);
        w.ell_at = w.ell_at.max(e.ell_at);
        w.h_prime = w.h_prime.max(e.h_prime);
        self.ell_bound += !report.ell_bound_holds() as usize;
        self.alpha_bound += !report.alpha_bound_holds() as usize;
        if !report.h_prime_holds() {
            self.h_prime += 1;
            if self.h_prime_examples.len() < 3 {
                self.h_prime_examples
                    .push((report.h_prime, report.ell0_plus, report.ell0_minus));
            }
        }
        let abs_ceiling = -(1.0 - report.ell0_plus.abs()).min(1.0 - report.ell0_minus.abs());
        self.h_prime_abs += !(report.h_prime < abs_ceiling) as usize;
        let ctx = setup.context()?;
        self.valley += !valley_scan(&propagate(setup, &ctx)?, SAMPLES_PER_SEGMENT).holds() as usize;
        Ok(())
    }

    /// Closed forms against the linear system and re-solve oracles.
    pub fn oracle_checks(&self) -> Vec<Check> {
        let w = &self.worst;
        let n = format!("{} scenes, {} re-solved", self.scenes, self.resolved);
        vec![
            Check::below("perturb.linear_system", w.linear_system, LINEAR_SYSTEM_TOL)
                .with_note(n.clone()),
            Check::below("perturb.u0_prime_fd", w.u0_prime, FD_TOL),
            Check::below("perturb.alpha0_prime_fd", w.alpha0_prime, FD_TOL),
            Check::below("perturb.ell0_fd", w.ell0, FD_TOL),
            Check::below("perturb.decomposition", w.decomposition, DECOMPOSITION_TOL),
            Check::below("perturb.ell_at_fd", w.ell_at, FD_TOL)
                .with_note("relative to max |ℓ| over the period"),
            Check::below("perturb.h_prime_fd", w.h_prime, FD_TOL),
        ]
    }

    pub fn bound_checks(&self) -> Vec<Check> {
        let n = format!("{} scenes", self.scenes);
        vec![
            Check::none("perturb.ell0_bound", self.ell_bound).with_note(n.clone()),
            Check::none("perturb.alpha0_prime_bound", self.alpha_bound).with_note(n),
        ]
    }

    pub fn h_prime_checks(&self) -> Vec<Check> {
        let examples: Vec<String> = self
            .h_prime_examples
            .iter()
            .map(|(h, p, m)| format!("h'={h:.6} l0+={p:.4} l0-={m:.4}"))
            .collect();
        let mut literal = Check::none("perturb.h_prime_ceiling", self.h_prime).with_note(format!(
            "h' < -min(1-l0+, 1-l0-) on {} scenes; with |l0±| the ceiling fails on {}",
            self.scenes, self.h_prime_abs
        ));
        if !examples.is_empty() {
            literal.note = Some(format!(
                "{}; e.g. {}",
                literal.note.unwrap_or_default(),
                examples.join(", ")
            ));
        }
        vec![
            literal,
            Check::none("perturb.h_prime_ceiling_abs", self.h_prime_abs),
            Check::none("perturb.single_valley", self.valley)
                .with_note(format!("{SAMPLES_PER_SEGMENT} samples per segment")),
        ]
    }
}

/// A normalized setup for a generated scene.
pub fn scene_setup(scene: &GrazingScene) -> Result<PerturbationSetup> {
    normalize_frame(&scene.table, &scene.orbit, Some(scene.k_star), None)
}

/// Run the perturbation analysis on `scenes` generated scenes, re-solving
/// the first `resolved` of them for the finite-difference oracles.
pub fn grazing_sweep(seed: u64, scenes: usize, resolved: usize) -> GrazingTally {
    let mut rng = rng(seed);
    let mut tally = GrazingTally::default();
    for i in 0..scenes {
        let scene = grazing_scene(&mut rng, 0.001..0.1);
        let res = scene_setup(&scene).and_then(|s| tally.add(&s, i < resolved));
        if let Err(e) = res {
            log::warn!("scene {i}: {e}");
            tally.setup_failures += 1;
        }
    }
    tally
}

/// A random proper rigid motion, or a reflected one when `reflect` is set.
pub fn random_motion(rng: &mut SceneRng, reflect: bool) -> RigidMotion {
    RigidMotion {
        rotation: rng.gen_range(0.0..TAU),
        translation: Vec2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
        reflect,
    }
}

/// `(|ℓ₀⁺|, |ℓ₀⁻|, |h′|, |α₀′|)` of a scene after moving it by `motion`
/// and re-solving from scratch.
fn moved_scalars(scene: &GrazingScene, motion: &RigidMotion) -> Result<([f64; 4], PeriodicOrbit)> {
    let table = motion.apply_table(&scene.table)?;
    let orbit = solve_periodic(&table, &scene.orbit.sequence)?;
    let setup = normalize_frame(&table, &orbit, Some(scene.k_star), None)?;
    let r = respond(&setup)?;
    Ok((
        [
            r.ell0_plus.abs(),
            r.ell0_minus.abs(),
            r.h_prime.abs(),
            r.alpha0_prime.abs(),
        ],
        orbit,
    ))
}

/// Reported scalars under random rigid motions, and covariance under
/// reflection (`α₀` changes sign, magnitudes stay).
pub fn invariance_suite(seed: u64, scenes: usize) -> Vec<Check> {
    let mut rng = rng(seed);
    let (mut motion_err, mut reflect_err, mut alpha_sign) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    let diff = |a: &[f64; 4], b: &[f64; 4]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
            .fold(0.0, f64::max)
    };
    for _ in 0..scenes {
        let scene = grazing_scene(&mut rng, 0.001..0.1);
        let motions = [
            random_motion(&mut rng, false),
            random_motion(&mut rng, true),
        ];
        let res = (|| -> Result<()> {
            let (base, orbit) = moved_scalars(&scene, &RigidMotion::identity())?;
            let (moved, _) = moved_scalars(&scene, &motions[0])?;
            let (mirrored, mirror_orbit) = moved_scalars(&scene, &motions[1])?;
            motion_err = motion_err.max(diff(&base, &moved));
            reflect_err = reflect_err.max(diff(&base, &mirrored));
            alpha_sign = alpha_sign.max((orbit.alpha(0) + mirror_orbit.alpha(0)).abs());
            Ok(())
        })();
        if let Err(e) = res {
            log::warn!("invariance scene: {e}");
            failures += 1;
        }
    }
    vec![
        Check::below("invariance.rigid_motion", motion_err, INVARIANCE_TOL)
            .with_note(format!("{scenes} scenes; |l0+|, |l0-|, |h'|, |alpha0'|")),
        Check::below("invariance.reflection", reflect_err, INVARIANCE_TOL),
        Check::below(
            "invariance.reflection_alpha0_sign",
            alpha_sign,
            INVARIANCE_TOL,
        ),
        Check::none("invariance.failures", failures),
    ]
}
