//! Dimension-generic (d = 1 or 2) geometric kernel.
//!
//! Points always carry two coordinates; in dimension one the `y` coordinate is
//! identically zero and every container that cares about dimension records it
//! explicitly (see [`Dim`]). This keeps the 1D and 2D paths on one code base
//! while leaving the 1D hot loops free of generic overhead.

mod cell;
mod index;
mod voronoi;

pub use cell::{star_membership, ConvexCell, HalfPlane};
pub use index::PointIndex;
pub use voronoi::{radii, star_partition_assign, voronoi_cells, RadiiReport, VoronoiDiagram};

pub(crate) use voronoi::star_assign_partial;

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

/// Relative tolerance; the absolute tolerance is this times a characteristic length.
pub const REL_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty input point set")]
    EmptyInput,
    #[error("degenerate input: points {0:?} and {1:?} coincide")]
    DegenerateInput(Point, Point),
    #[error("puncture {0:?} lies outside every cell")]
    UnassignedPuncture(Point),
    #[error("puncture {0:?} is claimed by more than one star set")]
    AmbiguousPuncture(Point),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn d(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn from_usize(d: usize) -> Option<Dim> {
        match d {
            1 => Some(Dim::One),
            2 => Some(Dim::Two),
            _ => None,
        }
    }

    /// Lebesgue measure of the closed unit ball.
    pub fn unit_ball_volume(self) -> f64 {
        match self {
            Dim::One => 2.0,
            Dim::Two => std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub const fn on_line(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Lexicographic order on (x, y) using total float ordering.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }

    pub fn approx_eq(self, other: Point, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol && (self.y - other.y).abs() <= tol
    }

    /// Snap to the integer grid of spacing `eps`.
    pub fn grid_key(self, eps: f64) -> (i64, i64) {
        ((self.x / eps).round() as i64, (self.y / eps).round() as i64)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Closed axis-aligned box. In dimension one the y-range is `[0, 0]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
    pub dim: Dim,
}

impl Aabb {
    pub fn new(min: Point, max: Point, dim: Dim) -> Self {
        let (min, max) = match dim {
            Dim::One => (Point::on_line(min.x), Point::on_line(max.x)),
            Dim::Two => (min, max),
        };
        Aabb { min, max, dim }
    }

    /// The cube `[-h, h]^d`.
    pub fn centered(half: f64, dim: Dim) -> Self {
        Aabb::new(Point::new(-half, -half), Point::new(half, half), dim)
    }

    /// The cube `anchor + [0, side]^d`.
    pub fn cube(anchor: Point, side: f64, dim: Dim) -> Self {
        Aabb::new(anchor, anchor + Point::new(side, side), dim)
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Aabb::new(Point::on_line(lo), Point::on_line(hi), Dim::One)
    }

    pub fn is_empty(&self) -> bool {
        match self.dim {
            Dim::One => self.max.x < self.min.x,
            Dim::Two => self.max.x < self.min.x || self.max.y < self.min.y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Smallest side length over the active axes.
    pub fn min_extent(&self) -> f64 {
        match self.dim {
            Dim::One => self.width(),
            Dim::Two => self.width().min(self.height()),
        }
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        match self.dim {
            Dim::One => self.width(),
            Dim::Two => self.width() * self.height(),
        }
    }

    /// Perimeter (2D) or number of boundary points (1D, i.e. 2).
    pub fn boundary_measure(&self) -> f64 {
        match self.dim {
            Dim::One => 2.0,
            Dim::Two => 2.0 * (self.width() + self.height()),
        }
    }

    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Point) -> bool {
        match self.dim {
            Dim::One => p.x >= self.min.x && p.x <= self.max.x,
            Dim::Two => {
                p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
            }
        }
    }

    /// Membership in the half-open box `[min, max)^d`.
    pub fn contains_half_open(&self, p: Point) -> bool {
        match self.dim {
            Dim::One => p.x >= self.min.x && p.x < self.max.x,
            Dim::Two => {
                p.x >= self.min.x && p.x < self.max.x && p.y >= self.min.y && p.y < self.max.y
            }
        }
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        let x = self.min.x <= other.max.x && other.min.x <= self.max.x;
        match self.dim {
            Dim::One => x,
            Dim::Two => x && self.min.y <= other.max.y && other.min.y <= self.max.y,
        }
    }

    /// Whether the closed ball `B̄_r(c)` lies inside the box.
    pub fn contains_ball(&self, c: Point, r: f64) -> bool {
        self.boundary_distance(c) >= r
    }

    /// Signed sup-distance from `p` to the complement of the box; negative outside.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let dx = (p.x - self.min.x).min(self.max.x - p.x);
        match self.dim {
            Dim::One => dx,
            Dim::Two => dx.min((p.y - self.min.y).min(self.max.y - p.y)),
        }
    }

    /// Shrink every active side by `m` (grow for negative `m`).
    pub fn shrink(&self, m: f64) -> Aabb {
        Aabb::new(
            self.min + Point::new(m, m),
            self.max - Point::new(m, m),
            self.dim,
        )
    }

    pub fn translate(&self, v: Point) -> Aabb {
        Aabb::new(self.min + v, self.max + v, self.dim)
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        Aabb::new(
            Point::new(self.min.x.max(other.min.x), self.min.y.max(other.min.y)),
            Point::new(self.max.x.min(other.max.x), self.max.y.min(other.max.y)),
            self.dim,
        )
    }

    /// Bounding box of a point cloud.
    pub fn bounding(points: &[Point], dim: Dim) -> Option<Aabb> {
        let first = *points.first()?;
        let (mut lo, mut hi) = (first, first);
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Some(Aabb::new(lo, hi, dim))
    }

    /// Largest absolute coordinate; used as the characteristic length for tolerances.
    pub fn characteristic_length(&self) -> f64 {
        self.min
            .x
            .abs()
            .max(self.max.x.abs())
            .max(self.min.y.abs())
            .max(self.max.y.abs())
            .max(self.width())
            .max(self.height())
    }
}

/// Absolute geometric tolerance for a region.
pub fn eps_for(region: &Aabb) -> f64 {
    REL_EPS * region.characteristic_length().max(1.0)
}

/// Distance from `p` to the closed segment `[a, b]` (which may be degenerate).
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_shrink_keeps_line_flat() {
        let b = Aabb::centered(10.0, Dim::One).shrink(2.0);
        assert_eq!(b.min, Point::on_line(-8.0));
        assert_eq!(b.max, Point::on_line(8.0));
        assert_eq!(b.volume(), 16.0);
    }

    #[test]
    fn ball_containment_uses_sup_distance() {
        let b = Aabb::centered(5.0, Dim::Two);
        assert!(b.contains_ball(Point::new(1.0, 1.0), 4.0));
        assert!(!b.contains_ball(Point::new(1.0, 1.0), 4.5));
    }

    #[test]
    fn half_open_box_excludes_upper_faces() {
        let u = Aabb::cube(Point::on_line(0.0), 10.0, Dim::One);
        assert!(u.contains_half_open(Point::on_line(0.0)));
        assert!(!u.contains_half_open(Point::on_line(10.0)));
        assert!(u.contains(Point::on_line(10.0)));
    }

    #[test]
    fn segment_distance_handles_degenerate_segments() {
        let a = Point::on_line(2.0);
        assert_eq!(point_segment_distance(Point::ORIGIN, a, a), 2.0);
        let d = point_segment_distance(
            Point::new(0.5, 1.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        );
        assert!((d - 1.0).abs() < 1e-15);
    }
}
