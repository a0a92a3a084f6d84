//! Planar primitives used by the floorplan, navigation and force code.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A 2-D vector in metres (or m/s, N, depending on context).
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

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector, or `None` for (near-)zero input.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
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
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A closed line segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[Vec2; 2]", into = "[Vec2; 2]")]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl From<[Vec2; 2]> for Segment {
    fn from(v: [Vec2; 2]) -> Self {
        Segment { a: v[0], b: v[1] }
    }
}

impl From<Segment> for [Vec2; 2] {
    fn from(s: Segment) -> Self {
        [s.a, s.b]
    }
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        p.distance(self.closest_point(p))
    }

    /// Distance from `p` to the infinite line through the segment.
    pub fn line_distance(&self, p: Vec2) -> f64 {
        let ab = self.b - self.a;
        let len = ab.norm();
        if len == 0.0 {
            return p.distance(self.a);
        }
        ((p - self.a).cross(ab) / len).abs()
    }

    /// True when the two closed segments share at least one point.
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = orient(other.a, other.b, self.a);
        let d2 = orient(other.a, other.b, self.b);
        let d3 = orient(self.a, self.b, other.a);
        let d4 = orient(self.a, self.b, other.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(other, self.a))
            || (d2 == 0.0 && on_segment(other, self.b))
            || (d3 == 0.0 && on_segment(self, other.a))
            || (d4 == 0.0 && on_segment(self, other.b))
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(s: &Segment, p: Vec2) -> bool {
    p.x >= s.a.x.min(s.b.x)
        && p.x <= s.a.x.max(s.b.x)
        && p.y >= s.a.y.min(s.b.y)
        && p.y <= s.a.y.max(s.b.y)
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// The four edges, counter-clockwise from the bottom edge.
    pub fn edges(&self) -> [Segment; 4] {
        let (a, c) = (self.min, self.max);
        let b = Vec2::new(c.x, a.y);
        let d = Vec2::new(a.x, c.y);
        [
            Segment::new(a, b),
            Segment::new(b, c),
            Segment::new(c, d),
            Segment::new(d, a),
        ]
    }
}

/// Signed area of a simple polygon (positive when counter-clockwise).
pub fn polygon_signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

pub fn polygon_is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = orient(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// Point-in-convex-polygon test (boundary counts as inside). Works for either
/// winding.
pub fn convex_contains(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut pos = false;
    let mut neg = false;
    for i in 0..n {
        let c = orient(poly[i], poly[(i + 1) % n], p);
        pos |= c > 0.0;
        neg |= c < 0.0;
        if pos && neg {
            return false;
        }
    }
    true
}

/// Signed distance from `p` to the boundary of a convex polygon, positive
/// inside.
pub fn convex_inner_distance(poly: &[Vec2], p: Vec2) -> f64 {
    let n = poly.len();
    let d = (0..n)
        .map(|i| Segment::new(poly[i], poly[(i + 1) % n]).distance_to(p))
        .fold(f64::INFINITY, f64::min);
    if convex_contains(poly, p) {
        d
    } else {
        -d
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut a = (theta + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a -= TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closest_point_clamps_to_endpoints() {
        let s = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(s.closest_point(Vec2::new(-1.0, 1.0)), Vec2::new(0.0, 0.0));
        assert_eq!(s.closest_point(Vec2::new(0.5, 2.0)), Vec2::new(0.5, 0.0));
        assert!((s.distance_to(Vec2::new(2.0, 0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_and_touching_segments_intersect() {
        let a = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0));
        let b = Segment::new(Vec2::new(0.0, 2.0), Vec2::new(2.0, 0.0));
        assert!(a.intersects(&b));
        let c = Segment::new(Vec2::new(2.0, 2.0), Vec2::new(3.0, 0.0));
        assert!(a.intersects(&c));
        let d = Segment::new(Vec2::new(3.0, 3.0), Vec2::new(4.0, 4.0));
        assert!(!a.intersects(&d));
    }

    #[test]
    fn convex_polygon_queries() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(polygon_is_convex(&sq));
        assert_eq!(polygon_signed_area(&sq), 4.0);
        assert!(convex_contains(&sq, Vec2::new(1.0, 1.0)));
        assert!(!convex_contains(&sq, Vec2::new(3.0, 1.0)));
        assert!((convex_inner_distance(&sq, Vec2::new(0.5, 1.0)) - 0.5).abs() < 1e-15);
        let dart = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(2.0, 3.0),
        ];
        assert!(!polygon_is_convex(&dart));
    }

    #[test]
    fn wrap_angle_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!(wrap_angle(0.3) == 0.3);
    }
}
