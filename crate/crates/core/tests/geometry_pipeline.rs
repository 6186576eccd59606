//! The collision map in `u` coordinates against ray casting on tables.

use std::f64::consts::PI;

use graze::geometry::angle_distance;
use graze::orbits::orbit_from_phis;
use graze::scenes::{random_orbit, random_step, rng};
use graze::{
    apply_b, next_collision, reflect, BilliardTable, Bounce, CollisionState, SymbolSequence,
    UCoords, Vec2,
};

fn two_disks() -> BilliardTable {
    BilliardTable::new(vec![Vec2::ZERO, Vec2::new(4.0, 0.0)]).unwrap()
}

#[test]
fn axial_flight_and_return() {
    let t = two_disks();
    let hit = next_collision(&t, Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), Some(0))
        .unwrap()
        .unwrap();
    assert_eq!(hit.state.scatterer, 1);
    assert!(hit.point.distance(Vec2::new(3.0, 0.0)) < 1e-12);
    assert!((hit.length - 2.0).abs() < 1e-12);
    assert!(angle_distance(hit.state.phi, PI) < 1e-12);
    assert!(hit.state.alpha.abs() < 1e-12);

    let r = Vec2::new(4.0, 0.0);
    let u1 = apply_b(UCoords::new(0.0, PI), r).unwrap();
    assert!(angle_distance(u1.omega_out, PI) < 1e-12);
    assert!(angle_distance(u1.omega_in, 0.0) < 1e-12);
    let u2 = apply_b(u1, -r).unwrap();
    assert!(angle_distance(u2.omega_out, 0.0) < 1e-12);
    assert!(angle_distance(u2.omega_in, PI) < 1e-12);
}

#[test]
fn parallel_ray_escapes() {
    let t = two_disks();
    assert!(
        next_collision(&t, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Some(0))
            .unwrap()
            .is_none()
    );
}

/// `B(u, r)` agrees with casting the outgoing ray into a table holding the
/// departure disk at the origin and the target at `r`.
#[test]
fn collision_map_matches_ray_casting() {
    let mut g = rng(41);
    for _ in 0..500 {
        let s = random_step(&mut g, 0.05);
        let t = BilliardTable::new(vec![Vec2::ZERO, s.r]).unwrap();
        let dir = Vec2::from_angle(s.u.omega_out);
        let hit = next_collision(&t, s.state.point(&t), dir, Some(0))
            .unwrap()
            .expect("random steps reach the target");
        assert_eq!(hit.state.scatterer, 1);
        let Bounce::Reflected(out) = reflect(&hit.state, dir).unwrap() else {
            panic!("random steps do not graze");
        };
        let u1 = apply_b(s.u, s.r).unwrap();
        assert!(angle_distance(u1.omega_out, out.angle()) < 1e-10);
        assert!(angle_distance(u1.omega_in, dir.angle()) < 1e-10);
        assert!((hit.length - s.step.s_k()).abs() < 1e-9);
    }
}

/// Every step of a solved orbit is one application of the map. (Chaining
/// the steps instead would amplify round-off by the orbit's expansion.)
#[test]
fn orbit_steps_are_map_steps() {
    let mut g = rng(43);
    for _ in 0..30 {
        let (table, orbit) = random_orbit(&mut g, 2..=8);
        let seq = &orbit.sequence;
        for k in 0..orbit.period() as i64 {
            let r = table.center(seq.at(k + 1)) - table.center(seq.at(k));
            let u = apply_b(orbit.u(k), r).unwrap();
            let want = orbit.u(k + 1);
            assert!(angle_distance(u.omega_out, want.omega_out) < 1e-10);
            assert!(angle_distance(u.omega_in, want.omega_in) < 1e-12);
        }
    }
}

#[test]
fn states_round_trip_through_orbit_construction() {
    let t = two_disks();
    let seq = SymbolSequence::new(vec![0, 1], 2).unwrap();
    let o = orbit_from_phis(&t, &seq, &[0.0, PI]).unwrap();
    assert_eq!(o.states[1], CollisionState::new(1, PI, 0.0));
    assert!(o.s.iter().all(|&s| (s - 2.0).abs() < 1e-12));
}
