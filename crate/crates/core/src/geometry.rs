//! Planar geometry of tables made of unit disks.
//!
//! Angle conventions used throughout the crate:
//!
//! * a collision point on scatterer `C` is `Q = C + (cos φ, sin φ)`;
//! * `α` is the signed angle from the outward normal at `Q` to the reversed
//!   incoming direction, so a head-on hit has `α = 0` and `|α| = π/2` is a
//!   grazing (tangential) collision;
//! * the outgoing direction angle is `ω_k = φ_k − α_k` and the incoming one
//!   is `ω_{k−1} = φ_k + α_k + π`, both taken mod 2π.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|α| ≥ π/2 − GRAZING_TOL` counts as a grazing collision.
pub const GRAZING_TOL: f64 = 1e-7;

/// Tolerance for comparing angles mod 2π.
pub const ANGLE_TOL: f64 = 1e-9;

/// Slack used when deciding whether a point lies strictly inside a disk.
const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `a`.
    pub fn from_angle(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        wrap_2pi(self.y.atan2(self.x))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduce an angle to `(−π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = wrap_2pi(a);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

pub fn angles_close(a: f64, b: f64) -> bool {
    angle_distance(a, b) <= ANGLE_TOL
}

pub fn is_grazing_angle(alpha: f64) -> bool {
    alpha.abs() >= FRAC_PI_2 - GRAZING_TOL
}

/// Unit-disk scatterers with pairwise disjoint closures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BilliardTable {
    centers: Vec<Vec2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl BilliardTable {
    pub fn new(centers: Vec<Vec2>) -> Result<Self> {
        Self::with_labels(centers, None)
    }

    pub fn with_labels(centers: Vec<Vec2>, labels: Option<Vec<String>>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::TooFewScatterers(centers.len()));
        }
        if let Some(l) = &labels {
            if l.len() != centers.len() {
                return Err(Error::InvalidState(format!(
                    "{} labels for {} scatterers",
                    l.len(),
                    centers.len()
                )));
            }
        }
        if let Some(c) = centers
            .iter()
            .find(|c| !(c.x.is_finite() && c.y.is_finite()))
        {
            return Err(Error::InvalidState(format!("non-finite center {c}")));
        }
        check_disjoint(&centers)?;
        Ok(Self { centers, labels })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Vec2] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> Vec2 {
        self.centers[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Same table with scatterer `i` moved to `position`.
    pub fn with_center(&self, i: usize, position: Vec2) -> Result<Self> {
        let mut centers = self.centers.clone();
        centers[i] = position;
        Self::with_labels(centers, self.labels.clone())
    }

    /// Apply a map to every center.
    pub fn map_centers(&self, f: impl Fn(Vec2) -> Vec2) -> Result<Self> {
        Self::with_labels(
            self.centers.iter().map(|&c| f(c)).collect(),
            self.labels.clone(),
        )
    }

    /// Smallest gap between two scatterer boundaries (`m`).
    pub fn min_gap(&self) -> f64 {
        self.pair_distances().fold(f64::INFINITY, f64::min) - 2.0
    }

    /// Largest distance between two centers (`M`).
    pub fn max_center_distance(&self) -> f64 {
        self.pair_distances().fold(0.0, f64::max)
    }

    fn pair_distances(&self) -> impl Iterator<Item = f64> + '_ {
        let c = &self.centers;
        (0..c.len()).flat_map(move |i| (i + 1..c.len()).map(move |j| c[i].distance(c[j])))
    }

    /// Index of a disk whose interior strictly contains `p`, if any.
    pub fn containing(&self, p: Vec2) -> Option<usize> {
        self.centers
            .iter()
            .position(|&c| p.distance(c) < 1.0 - INSIDE_TOL)
    }
}

fn check_disjoint(centers: &[Vec2]) -> Result<()> {
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let distance = centers[i].distance(centers[j]);
            if distance <= 2.0 {
                return Err(Error::Overlap { i, j, distance });
            }
        }
    }
    Ok(())
}

/// One collision with a scatterer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub scatterer: usize,
    /// Position angle on the scatterer, in `[0, 2π)`.
    pub phi: f64,
    /// Signed angle of incidence.
    pub alpha: f64,
}

impl CollisionState {
    pub fn new(scatterer: usize, phi: f64, alpha: f64) -> Self {
        Self {
            scatterer,
            phi: wrap_2pi(phi),
            alpha,
        }
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::from_angle(self.phi)
    }

    pub fn point(&self, table: &BilliardTable) -> Vec2 {
        table.center(self.scatterer) + self.normal()
    }

    pub fn is_grazing(&self) -> bool {
        is_grazing_angle(self.alpha)
    }

    pub fn to_u(&self) -> UCoords {
        UCoords {
            omega_out: wrap_2pi(self.phi - self.alpha),
            omega_in: wrap_2pi(self.phi + self.alpha + PI),
        }
    }

    /// Inverse of [`CollisionState::to_u`]; fails with a grazing signal
    /// when the implied angle of incidence reaches the grazing tolerance.
    pub fn from_u(scatterer: usize, u: UCoords) -> Result<Self> {
        let (phi, alpha) = u.phi_alpha();
        if is_grazing_angle(alpha) {
            return Err(Error::Grazing {
                margin: FRAC_PI_2 - alpha.abs(),
            });
        }
        Ok(Self::new(scatterer, phi, alpha))
    }
}

/// `u_k = (ω_k, ω_{k−1})`: outgoing and incoming direction angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UCoords {
    pub omega_out: f64,
    pub omega_in: f64,
}

impl UCoords {
    pub fn new(omega_out: f64, omega_in: f64) -> Self {
        Self {
            omega_out: wrap_2pi(omega_out),
            omega_in: wrap_2pi(omega_in),
        }
    }

    /// `(φ, α)` without the grazing check; `α ∈ (−π/2, π/2]`.
    pub fn phi_alpha(&self) -> (f64, f64) {
        let alpha = 0.5 * wrap_pi(self.omega_in - self.omega_out - PI);
        (wrap_2pi(self.omega_out + alpha), alpha)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.omega_out, self.omega_in]
    }

    /// Componentwise distance mod 2π.
    pub fn distance(&self, o: &UCoords) -> f64 {
        angle_distance(self.omega_out, o.omega_out).max(angle_distance(self.omega_in, o.omega_in))
    }
}

/// Forward intersection of a ray with a unit circle.
///
/// Returns the two ray parameters `(near, far)` of the intersections, or
/// `None` when the line misses the circle.
pub(crate) fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2) -> Option<(f64, f64)> {
    let oc = origin - center;
    let b = dir.dot(oc);
    let c = oc.norm_sq() - 1.0;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    // stable roots of t² + 2bt + c = 0
    let q = -(b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (t1, t2) = (q, c / q);
    Some(if t1 <= t2 { (t1, t2) } else { (t2, t1) })
}

/// Result of casting a ray into the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub state: CollisionState,
    pub point: Vec2,
    /// Flight distance from the ray origin.
    pub length: f64,
}

/// First scatterer hit by the ray `origin + t·direction`, `t > 0`.
///
/// `exclude` names the scatterer the ray departs from; only its zero-distance
/// root is suppressed. Returns `Ok(None)` when the ray escapes.
pub fn next_collision(
    table: &BilliardTable,
    origin: Vec2,
    direction: Vec2,
    exclude: Option<usize>,
) -> Result<Option<Hit>> {
    if let Some(i) = table.containing(origin) {
        if Some(i) != exclude || origin.distance(table.center(i)) < 1.0 - 1e-9 {
            return Err(Error::InvalidState(format!(
                "ray origin {origin} lies inside scatterer {i}"
            )));
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in table.centers().iter().enumerate() {
        let Some((t_near, t_far)) = ray_circle(origin, direction, c) else {
            continue;
        };
        // the departing disk's zero-distance root is not a collision
        let t_min = if Some(i) == exclude { 1e-9 } else { 0.0 };
        let Some(t) = [t_near, t_far].into_iter().find(|&t| t >= t_min) else {
            continue;
        };
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((i, t));
        }
    }
    Ok(best.map(|(i, t)| {
        let point = origin + direction * t;
        let normal = point - table.center(i);
        let phi = normal.angle();
        let alpha = wrap_pi(direction.angle() - phi - PI);
        Hit {
            state: CollisionState::new(i, phi, alpha),
            point,
            length: t,
        }
    }))
}

/// Outcome of an elastic reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounce {
    Reflected(Vec2),
    /// Tangential incidence; no well-defined reflection.
    Grazing,
}

/// Specular reflection of `incoming` at the collision point of `state`.
pub fn reflect(state: &CollisionState, incoming: Vec2) -> Result<Bounce> {
    let n = state.normal();
    let vn = incoming.dot(n);
    if vn.abs() <= GRAZING_TOL {
        return Ok(Bounce::Grazing);
    }
    if vn > 0.0 {
        return Err(Error::InvalidState(
            "incoming direction points out of the scatterer".into(),
        ));
    }
    Ok(Bounce::Reflected(incoming - n * (2.0 * vn)))
}

/// Closest approach of a segment to the scatterers not in `skip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clearance {
    /// Center-to-segment distance; 1 means tangency.
    pub distance: f64,
    pub scatterer: usize,
    /// Point of the segment closest to the center.
    pub foot: Vec2,
    /// Foot point parameter in `[0, 1]` along `p0 → p1`.
    pub t: f64,
}

/// Closest point of segment `p0 p1` to `c`, as `(foot, t)`.
pub fn closest_point_on_segment(c: Vec2, p0: Vec2, p1: Vec2) -> (Vec2, f64) {
    let d = p1 - p0;
    let t = ((c - p0).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
    (p0 + d * t, t)
}

pub fn segment_clearance(
    table: &BilliardTable,
    p0: Vec2,
    p1: Vec2,
    skip: &[usize],
) -> Option<Clearance> {
    table
        .centers()
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(i, &c)| {
            let (foot, t) = closest_point_on_segment(c, p0, p1);
            Clearance {
                distance: c.distance(foot),
                scatterer: i,
                foot,
                t,
            }
        })
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

/// Rotation by `rotation`, then translation, then an optional reflection
/// `y ↦ −y`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: f64,
    pub translation: Vec2,
    pub reflect: bool,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.rotation.sin_cos();
        let q = Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y) + self.translation;
        if self.reflect {
            Vec2::new(q.x, -q.y)
        } else {
            q
        }
    }

    /// Preimage of `p`: `apply(inverse_apply(p)) == p`.
    pub fn inverse_apply(&self, p: Vec2) -> Vec2 {
        let q = if self.reflect {
            Vec2::new(p.x, -p.y)
        } else {
            p
        } - self.translation;
        let (s, c) = self.rotation.sin_cos();
        Vec2::new(c * q.x + s * q.y, -s * q.x + c * q.y)
    }

    /// Image of a direction angle.
    pub fn apply_angle(&self, a: f64) -> f64 {
        let r = a + self.rotation;
        wrap_2pi(if self.reflect { -r } else { r })
    }

    pub fn apply_table(&self, table: &BilliardTable) -> Result<BilliardTable> {
        table.map_centers(|c| self.apply(c))
    }
}
