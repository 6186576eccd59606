//! Collision-map calculus for planar dispersing billiards with unit disks.
//!
//! The crate covers the single-collision map in the outgoing/incoming
//! direction coordinates `u = (ω_k, ω_{k−1})`, the closed-form products of its
//! Jacobians along periodic orbits, periodic-orbit search, the first-order
//! response of an orbit to moving one scatterer, and a continuation that
//! pushes that scatterer toward an orbit segment until the orbit grazes it.

// `!(x < y)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod continuation;
pub mod error;
pub mod gcalc;
pub mod geometry;
pub mod oracle;
pub mod orbits;
pub mod perturbation;
pub mod scene;
pub mod scenes;

pub use collision::{apply_b, apply_f, db_dr, db_du, df_dstate, step_b, Jacobian2, Mat2, StepData};
pub use error::{Error, Result};
pub use gcalc::{GContext, GVariants};
pub use geometry::{
    next_collision, reflect, BilliardTable, Bounce, Clearance, CollisionState, Hit, UCoords, Vec2,
};
pub use orbits::{
    enumerate_orbits, multi_step_jacobian, solve_periodic, OrbitFilters, PeriodicOrbit,
    SymbolSequence,
};
pub use scene::{load_scene, parse_scene};
