//! Tile shapes: level-0 convex cells and, above that, finite unions of
//! translated previous-level tiles.

use crate::geometry::{point_segment_distance, Aabb, ConvexCell, Dim, Point, PointIndex};
use serde::{Deserialize, Serialize};

/// A previous-level tile of class `class` translated by `offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offset: Point,
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TileShape {
    /// Voronoi cell with its site moved to the origin.
    Cell { cell: ConvexCell },
    /// Previous-level placements, sorted by offset.
    Union { placements: Vec<Placement> },
}

impl TileShape {
    pub fn placements(&self) -> &[Placement] {
        match self {
            TileShape::Cell { .. } => &[],
            TileShape::Union { placements } => placements,
        }
    }
}

/// Whether two placement lists agree up to `tol` per offset, as multisets.
pub fn same_placements(a: &[Placement], b: &[Placement], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut bs: Vec<Placement> = b.to_vec();
    bs.sort_by(|p, q| p.offset.x.total_cmp(&q.offset.x));
    let mut used = vec![false; bs.len()];
    'outer: for p in a {
        let lo = bs.partition_point(|q| q.offset.x < p.offset.x - tol);
        for j in lo..bs.len() {
            if bs[j].offset.x > p.offset.x + tol {
                break;
            }
            if !used[j] && bs[j].class == p.class && bs[j].offset.approx_eq(p.offset, tol) {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

pub(crate) fn sort_placements(p: &mut [Placement]) {
    p.sort_by(|a, b| a.offset.lex_cmp(&b.offset).then(a.class.cmp(&b.class)));
}

/// A boundary face: a segment in 2D, a single point (`a == b`) in 1D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub a: Point,
    pub b: Point,
    /// Outward unit normal.
    pub normal: Point,
}

impl Face {
    fn translate(&self, v: Point) -> Face {
        Face {
            a: self.a + v,
            b: self.b + v,
            normal: self.normal,
        }
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    pub fn same_as(&self, other: &Face, tol: f64) -> bool {
        (self.a.approx_eq(other.a, tol) && self.b.approx_eq(other.b, tol))
            || (self.a.approx_eq(other.b, tol) && self.b.approx_eq(other.a, tol))
    }

    fn distance_to(&self, p: Point) -> f64 {
        point_segment_distance(p, self.a, self.b)
    }

    /// Distance between two non-crossing faces.
    pub fn distance_to_face(&self, o: &Face) -> f64 {
        self.distance_to(o.a)
            .min(self.distance_to(o.b))
            .min(o.distance_to(self.a))
            .min(o.distance_to(self.b))
    }
}

/// Flattened geometry of a tile in its canonical position (anchor at 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileGeometry {
    /// Lebesgue measure, summed over the constituent placements.
    pub measure: f64,
    /// Convex pieces: maximal intervals in 1D, level-0 cells in 2D.
    pub pieces: Vec<ConvexCell>,
    pub exterior: Vec<Face>,
    /// Largest `r` with `B_r(0)` inside the tile (0 if the anchor is not interior).
    pub r_inner: f64,
    /// Smallest `R` with the tile inside `B̄_R(0)`.
    pub r_outer: f64,
    pub bbox: Aabb,
}

impl TileGeometry {
    pub fn from_cell(cell: &ConvexCell) -> Self {
        let pieces = vec![cell.clone()];
        let exterior = cell_faces(cell);
        finish(cell.measure(), pieces, exterior, cell.dim)
    }

    /// Geometry of a union of placed previous-level tiles.
    pub fn from_placements(
        placements: &[Placement],
        prev: &[TileGeometry],
        dim: Dim,
        tol: f64,
    ) -> Self {
        let measure = placements.iter().map(|p| prev[p.class].measure).sum();
        match dim {
            Dim::One => {
                let mut iv: Vec<(f64, f64)> = placements
                    .iter()
                    .flat_map(|p| {
                        prev[p.class]
                            .pieces
                            .iter()
                            .map(move |c| (c.lo() + p.offset.x, c.hi() + p.offset.x))
                    })
                    .collect();
                iv.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut merged: Vec<(f64, f64)> = Vec::new();
                for (lo, hi) in iv {
                    match merged.last_mut() {
                        Some(last) if lo <= last.1 + tol => last.1 = last.1.max(hi),
                        _ => merged.push((lo, hi)),
                    }
                }
                let pieces: Vec<ConvexCell> = merged
                    .iter()
                    .map(|&(lo, hi)| ConvexCell::interval(lo, hi, 0.5 * (lo + hi)))
                    .collect();
                let exterior = pieces.iter().flat_map(cell_faces).collect();
                finish(measure, pieces, exterior, dim)
            }
            Dim::Two => {
                let pieces: Vec<ConvexCell> = placements
                    .iter()
                    .flat_map(|p| {
                        prev[p.class]
                            .pieces
                            .iter()
                            .map(move |c| c.translate(p.offset))
                    })
                    .collect();
                let exterior = union_exterior(&pieces, tol);
                finish(measure, pieces, exterior, dim)
            }
        }
    }

    /// Whether `p` lies in the closed tile.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.bbox.shrink(-tol).contains(p) && self.pieces.iter().any(|c| c.contains(p, tol))
    }

    pub fn translated_exterior(&self, v: Point) -> impl Iterator<Item = Face> + '_ {
        self.exterior.iter().map(move |f| f.translate(v))
    }
}

fn cell_faces(cell: &ConvexCell) -> Vec<Face> {
    (0..cell.face_count())
        .map(|i| {
            let (a, b) = cell.face(i);
            Face {
                a,
                b,
                normal: cell.halfplanes[i].normal,
            }
        })
        .collect()
}

/// Faces of the pieces not shared with another piece.
fn union_exterior(pieces: &[ConvexCell], tol: f64) -> Vec<Face> {
    let centers: Vec<Point> = pieces.iter().map(|c| c.bbox().center()).collect();
    let reach = pieces
        .iter()
        .zip(&centers)
        .map(|(c, &m)| c.max_vertex_distance(m))
        .fold(0.0, f64::max);
    let index = PointIndex::new(&centers, Dim::Two, reach.max(tol));
    let step = 1e3 * tol;
    let mut out = Vec::new();
    for (k, cell) in pieces.iter().enumerate() {
        for f in cell_faces(cell) {
            let probe = f.midpoint() + f.normal * step;
            let mut shared = false;
            index.for_each_within(probe, reach + step, |j| {
                if j != k && !shared && pieces[j].contains(probe, 0.0) {
                    shared = true;
                }
            });
            if !shared {
                out.push(f);
            }
        }
    }
    out
}

fn finish(measure: f64, pieces: Vec<ConvexCell>, exterior: Vec<Face>, dim: Dim) -> TileGeometry {
    let verts: Vec<Point> = pieces
        .iter()
        .flat_map(|c| c.vertices.iter().copied())
        .collect();
    let bbox = Aabb::bounding(&verts, dim).unwrap_or(Aabb::centered(0.0, dim));
    let r_outer = verts.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let inside = pieces.iter().any(|c| c.contains(Point::ORIGIN, 0.0));
    let r_inner = if inside {
        exterior
            .iter()
            .map(|f| point_segment_distance(Point::ORIGIN, f.a, f.b))
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    TileGeometry {
        measure,
        pieces,
        exterior,
        r_inner,
        r_outer,
        bbox,
    }
}
