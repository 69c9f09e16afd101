use super::{point_segment_distance, Aabb, Dim, Point, REL_EPS};
use serde::{Deserialize, Serialize};

/// Closed half-space `normal · x <= offset` with a unit outward normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Point, offset: f64) -> Self {
        HalfPlane { normal, offset }
    }

    /// Positive outside, negative inside.
    pub fn slack(&self, p: Point) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// The half-plane of points at least as close to `site` as to `other`.
    ///
    /// The two bisectors of a pair are computed from the same ordered pair and
    /// differ by an exact sign flip, so shared faces are tie-broken consistently.
    pub fn bisector(site: Point, other: Point) -> HalfPlane {
        let (a, b, flip) = if site.lex_cmp(&other).is_le() {
            (site, other, false)
        } else {
            (other, site, true)
        };
        let d = b - a;
        let len = d.norm();
        let n = d * (1.0 / len);
        let c = n.dot((a + b) * 0.5);
        if flip {
            HalfPlane::new(-n, -c)
        } else {
            HalfPlane::new(n, c)
        }
    }

    pub fn translate(&self, v: Point) -> HalfPlane {
        HalfPlane::new(self.normal, self.offset + self.normal.dot(v))
    }

    /// Sign of `Σ n_k ε^k` for all sufficiently small `ε > 0`.
    fn lex_sign(&self) -> i8 {
        const ZERO: f64 = 1e-12;
        for c in [self.normal.x, self.normal.y] {
            if c > ZERO {
                return 1;
            }
            if c < -ZERO {
                return -1;
            }
        }
        0
    }
}

/// Bounded convex cell given by its supporting half-planes and vertices.
///
/// In 2D the vertices are in counter-clockwise order and `halfplanes[i]`
/// supports the edge from `vertices[i]` to `vertices[i + 1]`. In 1D the cell is
/// the interval `[vertices[0].x, vertices[1].x]` and `halfplanes[i]` is the
/// constraint active at `vertices[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    pub halfplanes: Vec<HalfPlane>,
    pub vertices: Vec<Point>,
    pub site: Point,
    pub dim: Dim,
}

impl ConvexCell {
    pub fn interval(lo: f64, hi: f64, site: f64) -> Self {
        ConvexCell {
            halfplanes: vec![
                HalfPlane::new(Point::on_line(-1.0), -lo),
                HalfPlane::new(Point::on_line(1.0), hi),
            ],
            vertices: vec![Point::on_line(lo), Point::on_line(hi)],
            site: Point::on_line(site),
            dim: Dim::One,
        }
    }

    pub fn from_box(b: &Aabb, site: Point) -> Self {
        match b.dim {
            Dim::One => ConvexCell::interval(b.min.x, b.max.x, site.x),
            Dim::Two => {
                let vertices = vec![
                    b.min,
                    Point::new(b.max.x, b.min.y),
                    b.max,
                    Point::new(b.min.x, b.max.y),
                ];
                let halfplanes = vec![
                    HalfPlane::new(Point::new(0.0, -1.0), -b.min.y),
                    HalfPlane::new(Point::new(1.0, 0.0), b.max.x),
                    HalfPlane::new(Point::new(0.0, 1.0), b.max.y),
                    HalfPlane::new(Point::new(-1.0, 0.0), -b.min.x),
                ];
                ConvexCell {
                    halfplanes,
                    vertices,
                    site,
                    dim: Dim::Two,
                }
            }
        }
    }

    pub fn lo(&self) -> f64 {
        self.vertices[0].x
    }

    pub fn hi(&self) -> f64 {
        self.vertices[self.vertices.len() - 1]
            .x
            .max(self.vertices[0].x)
    }

    pub fn face_count(&self) -> usize {
        self.halfplanes.len()
    }

    /// Face `i` as a (possibly degenerate) segment.
    pub fn face(&self, i: usize) -> (Point, Point) {
        match self.dim {
            Dim::One => (self.vertices[i], self.vertices[i]),
            Dim::Two => (
                self.vertices[i],
                self.vertices[(i + 1) % self.vertices.len()],
            ),
        }
    }

    /// Lebesgue measure (length in 1D, area in 2D).
    pub fn measure(&self) -> f64 {
        match self.dim {
            Dim::One => self.vertices[1].x - self.vertices[0].x,
            Dim::Two => {
                let n = self.vertices.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let a = self.vertices[i];
                    let b = self.vertices[(i + 1) % n];
                    acc += a.x * b.y - b.x * a.y;
                }
                0.5 * acc
            }
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.halfplanes.iter().all(|h| h.slack(p) <= tol)
    }

    pub fn translate(&self, v: Point) -> ConvexCell {
        ConvexCell {
            halfplanes: self.halfplanes.iter().map(|h| h.translate(v)).collect(),
            vertices: self.vertices.iter().map(|&p| p + v).collect(),
            site: self.site + v,
            dim: self.dim,
        }
    }

    /// Largest distance from `from` to a vertex.
    pub fn max_vertex_distance(&self, from: Point) -> f64 {
        self.vertices
            .iter()
            .map(|&v| v.dist(from))
            .fold(0.0, f64::max)
    }

    /// Distance from `p` to the boundary of the cell.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        (0..self.face_count())
            .map(|i| {
                let (a, b) = self.face(i);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::bounding(&self.vertices, self.dim).expect("cell has vertices")
    }

    /// Intersect with a half-plane, keeping edge/plane alignment. `None` if empty.
    pub fn clip(&self, h: HalfPlane, tol: f64) -> Option<ConvexCell> {
        match self.dim {
            Dim::One => {
                let (mut lo, mut hi) = (self.lo(), self.hi());
                let mut planes = self.halfplanes.clone();
                if h.normal.x > 0.0 {
                    let b = h.offset / h.normal.x;
                    if b < hi {
                        hi = b;
                        planes[1] = h;
                    }
                } else if h.normal.x < 0.0 {
                    let a = h.offset / h.normal.x;
                    if a > lo {
                        lo = a;
                        planes[0] = h;
                    }
                } else if h.offset < 0.0 {
                    return None;
                }
                if hi - lo <= tol {
                    return None;
                }
                Some(ConvexCell {
                    halfplanes: planes,
                    vertices: vec![Point::on_line(lo), Point::on_line(hi)],
                    site: self.site,
                    dim: Dim::One,
                })
            }
            Dim::Two => self.clip_polygon(h, tol),
        }
    }

    fn clip_polygon(&self, h: HalfPlane, tol: f64) -> Option<ConvexCell> {
        let n = self.vertices.len();
        let slack: Vec<f64> = self.vertices.iter().map(|&v| h.slack(v)).collect();
        if slack.iter().all(|&s| s <= tol) {
            return Some(self.clone());
        }
        if slack.iter().all(|&s| s >= -tol) {
            return None;
        }
        let mut out: Vec<(Point, HalfPlane)> = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (p, q) = (self.vertices[i], self.vertices[j]);
            let (sp, sq) = (slack[i], slack[j]);
            let e = self.halfplanes[i];
            if sp <= 0.0 {
                out.push((p, e));
                if sq > 0.0 {
                    let t = sp / (sp - sq);
                    out.push((p + (q - p) * t, h));
                }
            } else if sq <= 0.0 {
                let t = sp / (sp - sq);
                out.push((p + (q - p) * t, e));
            }
        }
        // Drop zero-length edges produced by vertices lying on the clip line.
        let mut cleaned: Vec<(Point, HalfPlane)> = Vec::with_capacity(out.len());
        for k in 0..out.len() {
            let next = out[(k + 1) % out.len()].0;
            if out[k].0.approx_eq(next, tol) {
                continue;
            }
            cleaned.push(out[k]);
        }
        if cleaned.len() < 3 {
            return None;
        }
        let cell = ConvexCell {
            vertices: cleaned.iter().map(|v| v.0).collect(),
            halfplanes: cleaned.iter().map(|v| v.1).collect(),
            site: self.site,
            dim: Dim::Two,
        };
        if cell.measure() <= tol * tol {
            return None;
        }
        Some(cell)
    }

    /// Intersection with a closed box, or `None` when it has no interior.
    pub fn clip_to_box(&self, b: &Aabb, tol: f64) -> Option<ConvexCell> {
        let planes = ConvexCell::from_box(b, self.site).halfplanes;
        let mut cell = self.clone();
        for h in planes {
            cell = cell.clip(h, tol)?;
        }
        Some(cell)
    }
}

/// Exact membership of `p` in the star set of `cell`: true iff
/// `p + (ε, ε², …)` lies in the cell for every sufficiently small `ε > 0`.
///
/// Decided symbolically: strictly inside all constraints is true, strictly
/// outside any is false, and every active constraint must have a
/// lexicographically negative normal.
pub fn star_membership(cell: &ConvexCell, p: Point) -> bool {
    let scale = 1.0 + p.x.abs().max(p.y.abs()) + cell.site.x.abs().max(cell.site.y.abs());
    star_membership_tol(cell, p, REL_EPS * scale)
}

pub(crate) fn star_membership_tol(cell: &ConvexCell, p: Point, tol: f64) -> bool {
    for h in &cell.halfplanes {
        let s = h.slack(p);
        if s > tol {
            return false;
        }
        if s >= -tol && h.lex_sign() >= 0 {
            return false;
        }
    }
    true
}
