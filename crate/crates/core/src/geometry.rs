//! Planar vector math, obstacle shapes, signed distances and ray casting.
//!
//! The world is a top-down plane. Obstacles are convex cross-sections
//! (discs, regular polygons, rotated boxes) and every query here is exact:
//! polygon distances come from edge decomposition, ray hits from analytic
//! ray/circle and ray/segment intersection.

use std::f64::consts::TAU;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hits at or below this parameter along a ray are ignored.
pub const RAY_SELF_HIT_EPS: f64 = 1e-9;

/// Tolerance on `|dir| = 1` accepted by [`ray_cast`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no obstacles")]
    NoObstacles,
    #[error("ray direction is not a unit vector (norm {0})")]
    NonUnitDirection(f64),
}

/// A point or displacement in the plane, in meters.
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

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
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

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Rescales to at most `max_norm`, keeping direction.
    pub fn clamp_norm(self, max_norm: f64) -> Vec2 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self * (max_norm / n)
        } else {
            self
        }
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2::new(x, y)
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

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Corners in counter-clockwise order starting at `min`.
    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }
}

/// Convex obstacle cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleShape {
    Disc {
        center: Vec2,
        radius: f64,
    },
    RegularPolygon {
        center: Vec2,
        circumradius: f64,
        sides: u32,
        rotation: f64,
    },
    Box {
        center: Vec2,
        half_extents: Vec2,
        rotation: f64,
    },
}

impl ObstacleShape {
    pub fn disc(center: Vec2, radius: f64) -> Self {
        ObstacleShape::Disc { center, radius }
    }

    pub fn hexagon(center: Vec2, circumradius: f64) -> Self {
        ObstacleShape::RegularPolygon {
            center,
            circumradius,
            sides: 6,
            rotation: 0.0,
        }
    }

    pub fn rect(center: Vec2, half_extents: Vec2, rotation: f64) -> Self {
        ObstacleShape::Box {
            center,
            half_extents,
            rotation,
        }
    }

    pub fn center(&self) -> Vec2 {
        match *self {
            ObstacleShape::Disc { center, .. }
            | ObstacleShape::RegularPolygon { center, .. }
            | ObstacleShape::Box { center, .. } => center,
        }
    }

    /// Describes the first violated shape invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        let finite = |v: f64| v.is_finite();
        match *self {
            ObstacleShape::Disc { center, radius } => {
                if !center.is_finite() || !finite(radius) {
                    return Err("disc has non-finite fields".into());
                }
                if radius <= 0.0 {
                    return Err(format!("disc radius must be positive, got {radius}"));
                }
            }
            ObstacleShape::RegularPolygon {
                center,
                circumradius,
                sides,
                rotation,
            } => {
                if !center.is_finite() || !finite(circumradius) || !finite(rotation) {
                    return Err("regular_polygon has non-finite fields".into());
                }
                if circumradius <= 0.0 {
                    return Err(format!(
                        "regular_polygon circumradius must be positive, got {circumradius}"
                    ));
                }
                if sides < 3 {
                    return Err(format!("regular_polygon needs sides >= 3, got {sides}"));
                }
            }
            ObstacleShape::Box {
                center,
                half_extents,
                rotation,
            } => {
                if !center.is_finite() || !half_extents.is_finite() || !finite(rotation) {
                    return Err("box has non-finite fields".into());
                }
                if half_extents.x <= 0.0 || half_extents.y <= 0.0 {
                    return Err(format!(
                        "box half_extents must be positive, got [{}, {}]",
                        half_extents.x, half_extents.y
                    ));
                }
            }
        }
        Ok(())
    }

    /// Counter-clockwise vertices for polygonal shapes; `None` for discs.
    pub fn vertices(&self) -> Option<Vec<Vec2>> {
        match *self {
            ObstacleShape::Disc { .. } => None,
            ObstacleShape::RegularPolygon {
                center,
                circumradius,
                sides,
                rotation,
            } => Some(
                (0..sides)
                    .map(|k| {
                        let theta = rotation + TAU * f64::from(k) / f64::from(sides);
                        center + Vec2::from_angle(theta) * circumradius
                    })
                    .collect(),
            ),
            ObstacleShape::Box {
                center,
                half_extents: h,
                rotation,
            } => Some(
                [
                    Vec2::new(-h.x, -h.y),
                    Vec2::new(h.x, -h.y),
                    Vec2::new(h.x, h.y),
                    Vec2::new(-h.x, h.y),
                ]
                .into_iter()
                .map(|v| center + v.rotate(rotation))
                .collect(),
            ),
        }
    }
}

/// Distance from `p` to segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 {
        ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

fn convex_polygon_signed_distance(p: Vec2, verts: &[Vec2]) -> f64 {
    let n = verts.len();
    let mut min_edge = f64::INFINITY;
    let mut inside = true;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        min_edge = min_edge.min(point_segment_distance(p, a, b));
        // CCW winding: interior lies to the left of every edge.
        if (b - a).cross(p - a) < 0.0 {
            inside = false;
        }
    }
    if inside {
        -min_edge
    } else {
        min_edge
    }
}

/// Signed distance from `p` to the shape boundary: negative inside, zero on
/// the boundary, positive outside.
pub fn signed_distance(p: Vec2, shape: &ObstacleShape) -> f64 {
    match shape {
        ObstacleShape::Disc { center, radius } => p.distance(*center) - radius,
        polygon => {
            let verts = polygon.vertices().expect("polygonal shape");
            convex_polygon_signed_distance(p, &verts)
        }
    }
}

/// Smallest signed distance over `obstacles` and the index attaining it.
/// Ties go to the lowest index.
pub fn min_obstacle_distance(
    p: Vec2,
    obstacles: &[ObstacleShape],
) -> Result<(f64, usize), GeometryError> {
    let mut best: Option<(f64, usize)> = None;
    for (i, shape) in obstacles.iter().enumerate() {
        let d = signed_distance(p, shape);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, i)),
        }
    }
    best.ok_or(GeometryError::NoObstacles)
}

fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [-b - sq, -b + sq]
        .into_iter()
        .find(|&t| t > RAY_SELF_HIT_EPS)
}

fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let edge = b - a;
    let denom = dir.cross(edge);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(edge) / denom;
    let u = ao.cross(dir) / denom;
    (t > RAY_SELF_HIT_EPS && (0.0..=1.0).contains(&u)).then_some(t)
}

fn ray_polygon(origin: Vec2, dir: Vec2, verts: &[Vec2]) -> Option<f64> {
    let n = verts.len();
    (0..n)
        .filter_map(|i| ray_segment(origin, dir, verts[i], verts[(i + 1) % n]))
        .min_by(f64::total_cmp)
}

/// Distance along `dir` to the nearest hit among the shape.
pub fn ray_hit(origin: Vec2, dir: Vec2, shape: &ObstacleShape) -> Option<f64> {
    match shape {
        ObstacleShape::Disc { center, radius } => ray_circle(origin, dir, *center, *radius),
        polygon => ray_polygon(origin, dir, &polygon.vertices().expect("polygonal shape")),
    }
}

/// Distance along `dir` from `origin` to the nearest obstacle surface or
/// bounds wall, clamped to `max_range`.
pub fn ray_cast(
    origin: Vec2,
    dir: Vec2,
    obstacles: &[ObstacleShape],
    bounds: &Bounds,
    max_range: f64,
) -> Result<f64, GeometryError> {
    let n = dir.norm();
    if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(GeometryError::NonUnitDirection(n));
    }
    let mut nearest = ray_polygon(origin, dir, &bounds.corners()).unwrap_or(f64::INFINITY);
    for shape in obstacles {
        if let Some(t) = ray_hit(origin, dir, shape) {
            nearest = nearest.min(t);
        }
    }
    Ok(nearest.min(max_range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arena() -> Bounds {
        Bounds::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0))
    }

    #[test]
    fn disc_signed_distance_examples() {
        let d = ObstacleShape::disc(Vec2::ZERO, 1.0);
        assert_abs_diff_eq!(signed_distance(Vec2::new(2.0, 0.0), &d), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(signed_distance(Vec2::new(0.6, 0.8), &d), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(signed_distance(Vec2::ZERO, &d), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn box_signed_distance_matches_axis_aligned_formula() {
        let b = ObstacleShape::rect(Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), 0.0);
        // Outside, nearest feature is a face.
        assert_abs_diff_eq!(signed_distance(Vec2::new(5.0, 1.0), &b), 2.0, epsilon = 1e-12);
        // Outside, nearest feature is the corner (3, 2).
        assert_abs_diff_eq!(signed_distance(Vec2::new(6.0, 6.0), &b), 5.0, epsilon = 1e-12);
        // Inside at the center: distance to the nearer (horizontal) face.
        assert_abs_diff_eq!(signed_distance(Vec2::new(1.0, 1.0), &b), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_box_is_rotation_of_axis_aligned_box() {
        let theta = 0.7;
        let aligned = ObstacleShape::rect(Vec2::ZERO, Vec2::new(2.0, 0.5), 0.0);
        let rotated = ObstacleShape::rect(Vec2::ZERO, Vec2::new(2.0, 0.5), theta);
        for p in [Vec2::new(3.0, 1.0), Vec2::new(0.2, 0.1), Vec2::new(-1.0, 4.0)] {
            assert_abs_diff_eq!(
                signed_distance(p, &aligned),
                signed_distance(p.rotate(theta), &rotated),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn hexagon_apothem_and_vertex_distances() {
        let r = 1.275;
        let h = ObstacleShape::hexagon(Vec2::ZERO, r);
        let apothem = r * (std::f64::consts::PI / 6.0).cos();
        // Vertex at angle 0; edge midpoint at angle 30 degrees.
        assert_abs_diff_eq!(signed_distance(Vec2::new(r + 1.0, 0.0), &h), 1.0, epsilon = 1e-12);
        let mid_dir = Vec2::from_angle(std::f64::consts::PI / 6.0);
        assert_abs_diff_eq!(signed_distance(mid_dir * (apothem + 0.5), &h), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(signed_distance(Vec2::ZERO, &h), -apothem, epsilon = 1e-12);
    }

    #[test]
    fn min_distance_examples() {
        let obs = vec![
            ObstacleShape::disc(Vec2::new(5.0, 0.0), 1.0),
            ObstacleShape::disc(Vec2::new(0.0, 3.0), 1.0),
        ];
        let (d, i) = min_obstacle_distance(Vec2::ZERO, &obs).unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-12);
        assert_eq!(i, 1);

        let (d, i) = min_obstacle_distance(Vec2::new(5.0, 0.5), &obs).unwrap();
        assert!(d < 0.0);
        assert_eq!(i, 0);

        let single = [ObstacleShape::disc(Vec2::new(3.0, 4.0), 2.0)];
        assert_abs_diff_eq!(min_obstacle_distance(Vec2::ZERO, &single).unwrap().0, 3.0, epsilon = 1e-12);

        assert_eq!(min_obstacle_distance(Vec2::ZERO, &[]), Err(GeometryError::NoObstacles));
    }

    #[test]
    fn min_distance_ties_go_to_lowest_index() {
        let obs = vec![
            ObstacleShape::disc(Vec2::new(2.0, 0.0), 1.0),
            ObstacleShape::disc(Vec2::new(-2.0, 0.0), 1.0),
        ];
        assert_eq!(min_obstacle_distance(Vec2::ZERO, &obs).unwrap().1, 0);
    }

    #[test]
    fn ray_cast_examples() {
        let wide = Bounds::new(Vec2::new(-30.0, -30.0), Vec2::new(30.0, 30.0));
        let obs = [ObstacleShape::disc(Vec2::new(5.0, 0.0), 1.0)];
        let t = ray_cast(Vec2::ZERO, Vec2::new(1.0, 0.0), &obs, &wide, 20.0).unwrap();
        assert_abs_diff_eq!(t, 4.0, epsilon = 1e-12);

        let walls = Bounds::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0));
        let t = ray_cast(Vec2::ZERO, Vec2::new(0.0, 1.0), &obs, &walls, 20.0).unwrap();
        assert_abs_diff_eq!(t, 10.0, epsilon = 1e-12);

        let t = ray_cast(Vec2::ZERO, Vec2::new(1.0, 0.0), &obs, &wide, 3.0).unwrap();
        assert_eq!(t, 3.0);
    }

    #[test]
    fn ray_cast_rejects_non_unit_direction() {
        let err = ray_cast(Vec2::ZERO, Vec2::new(2.0, 0.0), &[], &arena(), 5.0).unwrap_err();
        assert!(matches!(err, GeometryError::NonUnitDirection(n) if (n - 2.0).abs() < 1e-12));
    }

    #[test]
    fn ray_cast_hits_polygon_face() {
        let b = [ObstacleShape::rect(Vec2::new(4.0, 0.0), Vec2::new(1.0, 1.0), 0.0)];
        let t = ray_cast(Vec2::ZERO, Vec2::new(1.0, 0.0), &b, &arena(), 20.0).unwrap();
        assert_abs_diff_eq!(t, 3.0, epsilon = 1e-12);
        // Diagonal ray into a 45-degree rotated square hits its left vertex.
        let diamond = [ObstacleShape::rect(Vec2::new(4.0, 0.0), Vec2::new(1.0, 1.0), std::f64::consts::FRAC_PI_4)];
        let t = ray_cast(Vec2::ZERO, Vec2::new(1.0, 0.0), &diamond, &arena(), 20.0).unwrap();
        assert_abs_diff_eq!(t, 4.0 - std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn shape_checks() {
        assert!(ObstacleShape::disc(Vec2::ZERO, 0.0).check().is_err());
        let bad = ObstacleShape::RegularPolygon {
            center: Vec2::ZERO,
            circumradius: 1.0,
            sides: 2,
            rotation: 0.0,
        };
        assert!(bad.check().unwrap_err().contains("sides"));
        assert!(ObstacleShape::rect(Vec2::ZERO, Vec2::new(1.0, -1.0), 0.0).check().is_err());
        assert!(ObstacleShape::hexagon(Vec2::ZERO, 1.275).check().is_ok());
    }

    fn any_shape() -> impl Strategy<Value = ObstacleShape> {
        let c = (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y)| Vec2::new(x, y));
        prop_oneof![
            (c.clone(), 0.1..3.0f64).prop_map(|(c, r)| ObstacleShape::disc(c, r)),
            (c.clone(), 0.1..3.0f64, 3u32..9, -3.2..3.2f64).prop_map(|(c, r, n, rot)| {
                ObstacleShape::RegularPolygon {
                    center: c,
                    circumradius: r,
                    sides: n,
                    rotation: rot,
                }
            }),
            (c, 0.1..2.0f64, 0.1..2.0f64, -3.2..3.2f64)
                .prop_map(|(c, hx, hy, rot)| ObstacleShape::rect(c, Vec2::new(hx, hy), rot)),
        ]
    }

    fn any_point() -> impl Strategy<Value = Vec2> {
        (-8.0..8.0f64, -8.0..8.0f64).prop_map(|(x, y)| Vec2::new(x, y))
    }

    proptest! {
        #[test]
        fn signed_distance_is_one_lipschitz(shape in any_shape(), p in any_point(), q in any_point()) {
            let lhs = (signed_distance(p, &shape) - signed_distance(q, &shape)).abs();
            prop_assert!(lhs <= p.distance(q) + 1e-9);
        }

        #[test]
        fn disc_distance_rotation_invariant(c in any_point(), r in 0.1..3.0f64, p in any_point(), theta in -6.3..6.3f64) {
            let d = ObstacleShape::disc(c, r);
            let rotated = c + (p - c).rotate(theta);
            prop_assert!((signed_distance(p, &d) - signed_distance(rotated, &d)).abs() < 1e-9);
        }

        #[test]
        fn ray_never_shorter_than_clearance(shape in any_shape(), p in any_point(), theta in -3.2..3.2f64) {
            let clearance = signed_distance(p, &shape);
            prop_assume!(clearance > 1e-6);
            let far_walls = Bounds::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0));
            let t = ray_cast(p, Vec2::from_angle(theta), std::slice::from_ref(&shape), &far_walls, 500.0).unwrap();
            prop_assert!(t > 0.0 && t <= 500.0);
            prop_assert!(t >= clearance - 1e-9);
        }

        #[test]
        fn ray_monotone_as_obstacle_approaches(r in 0.2..1.5f64, far in 4.0..9.0f64, shift in 0.0..2.0f64, lateral in -1.0..1.0f64) {
            let dir = Vec2::new(1.0, 0.0);
            let cast = |cx: f64| {
                let d = [ObstacleShape::disc(Vec2::new(cx, lateral), r)];
                ray_cast(Vec2::ZERO, dir, &d, &arena(), 9.5).unwrap()
            };
            prop_assert!(cast(far - shift) <= cast(far) + 1e-12);
        }
    }
}
