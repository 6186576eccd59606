//! First-order response and continuation on the fixed scenes in `scenes/`.

use std::path::PathBuf;

use graze::continuation::{certify, run, ContinuationConfig, GrazingSite, Outcome, LANDING_TOL};
use graze::geometry::RigidMotion;
use graze::oracle::{rel_err, Bracket};
use graze::perturbation::{normalize_frame, respond, ALPHA0_LIMIT};
use graze::{load_scene, solve_periodic, BilliardTable, PeriodicOrbit, Vec2};

fn scene(name: &str) -> BilliardTable {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(name);
    load_scene(path).unwrap()
}

fn orbit(table: &BilliardTable, seq: &str) -> PeriodicOrbit {
    solve_periodic(table, &seq.parse().unwrap()).unwrap()
}

#[test]
fn constructed_scene_response() {
    let t = scene("constructed.json");
    let o = orbit(&t, "0-2-3-1");
    let setup = normalize_frame(&t, &o, None, Some(0.05)).unwrap();
    assert!((setup.h - 1.03).abs() < 1e-9, "h = {}", setup.h);
    assert!(setup.table.center(0).norm() < 1e-12);
    assert!(setup.orbit.states[0].phi.abs() < 1e-12);

    let r = respond(&setup).unwrap();
    assert!(r.alpha0.abs() < ALPHA0_LIMIT);
    assert!(r.ell_bound_holds(), "{r:?}");
    assert!(r.alpha_bound_holds(), "{r:?}");
    assert!(r.h_prime_holds(), "{r:?}");

    let fd = Bracket::new(&setup, 1e-6).unwrap();
    let (p, m) = fd.ell0();
    assert!(rel_err(r.ell0_plus, p) < 1e-4);
    assert!(rel_err(r.ell0_minus, m) < 1e-4);
    assert!(rel_err(r.alpha0_prime, fd.alpha0_prime()) < 1e-4);
    assert!(rel_err(r.h_prime, fd.h_prime()) < 1e-4);
}

#[test]
fn zero_forcing_direction_gives_zero_response() {
    // the orbit leaves scatterer 0 head-on, and C_0 moves along that ray
    let t = scene("zero_forcing.json");
    let o = orbit(&t, "0-1-2-1");
    let setup = normalize_frame(&t, &o, None, None).unwrap().with_theta(0.0);
    let r = respond(&setup).unwrap();
    assert!(r.alpha0.abs() < 1e-10);
    for v in [
        r.alpha0_prime,
        r.ell0_plus,
        r.ell0_minus,
        r.u0_prime[0],
        r.u0_prime[1],
    ] {
        assert!(v.abs() < 1e-10, "{r:?}");
    }
}

#[test]
fn reflection_flips_alpha0_and_keeps_magnitudes() {
    let t = scene("constructed.json");
    let o = orbit(&t, "0-2-3-1");
    let mirror = RigidMotion {
        rotation: 0.3,
        translation: Vec2::new(1.0, -2.0),
        reflect: true,
    };
    let mt = mirror.apply_table(&t).unwrap();
    let mo = o.transformed(&mt, &mirror).unwrap();
    for k in 0..o.period() {
        assert!((o.states[k].alpha + mo.states[k].alpha).abs() < 1e-12);
    }
    let a = respond(&normalize_frame(&t, &o, None, None).unwrap()).unwrap();
    let b = respond(&normalize_frame(&mt, &mo, None, None).unwrap()).unwrap();
    assert!((a.h - b.h).abs() < 1e-12);
    for (x, y) in [
        (a.ell0_plus, b.ell0_plus),
        (a.ell0_minus, b.ell0_minus),
        (a.alpha0_prime, b.alpha0_prime),
        (a.h_prime, b.h_prime),
    ] {
        assert!((x.abs() - y.abs()).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn constructed_scene_continues_to_grazing() {
    let t = scene("constructed.json");
    let o = orbit(&t, "0-2-3-1");
    let tr = run(&t, &o, &ContinuationConfig::default()).unwrap();
    assert_eq!(tr.outcome, Outcome::GrazingAtScatterer0);
    assert!(tr.h_decreasing());
    assert!(tr.alpha0_within_limit());
    assert!(tr.rate_holds());
    assert!(tr.alpha0_drift_holds());
    assert!(tr.displacement() <= tr.epsilon);
    let cert = certify(&tr).unwrap();
    assert!(cert.grazing_distance.abs() < LANDING_TOL);
    assert_eq!(cert.site, GrazingSite::Scatterer0 { segment: tr.k_star });
}

#[test]
fn grazing_elsewhere_is_certified_at_its_site() {
    let t = scene("grazing_elsewhere.json");
    let o = orbit(&t, "0-2-1-3");
    let cfg = ContinuationConfig {
        k_star: Some(1),
        epsilon: 1.0,
        ..Default::default()
    };
    let tr = run(&t, &o, &cfg).unwrap();
    assert_eq!(tr.outcome, Outcome::GrazingElsewhere);
    let site = GrazingSite::Segment {
        segment: 3,
        scatterer: 2,
    };
    assert_eq!(tr.site, Some(site));
    let cert = certify(&tr).unwrap();
    assert_eq!(cert.site, site);
    assert!(cert.grazing_distance.abs() < LANDING_TOL);
    // the segment k* has not yet reached scatterer 0
    assert!(cert.h > 1.0);
}
