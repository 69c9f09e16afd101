use super::cell::star_membership_tol;
use super::{eps_for, Aabb, ConvexCell, Dim, GeometryError, HalfPlane, Point, PointIndex};
use serde::{Deserialize, Serialize};

/// Voronoi cells of a finite point set, clipped to a region.
///
/// `exact[i]` is true when no point outside the region could alter cell `i`:
/// every vertex `v` of the cell has its empty ball `B̄_{|v - site|}(v)` inside
/// the region. Cells flagged inexact are clipped boundary cells.
#[derive(Clone, Debug)]
pub struct VoronoiDiagram {
    pub cells: Vec<ConvexCell>,
    pub exact: Vec<bool>,
    pub region: Aabb,
}

impl VoronoiDiagram {
    pub fn exact_cells(&self) -> impl Iterator<Item = (usize, &ConvexCell)> {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.exact[*i])
    }
}

/// Voronoi cell of every point, in input order.
pub fn voronoi_cells(points: &[Point], region: &Aabb) -> Result<VoronoiDiagram, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let tol = eps_for(region);
    match region.dim {
        Dim::One => voronoi_line(points, region, tol),
        Dim::Two => voronoi_plane(points, region, tol),
    }
}

fn voronoi_line(
    points: &[Point],
    region: &Aabb,
    tol: f64,
) -> Result<VoronoiDiagram, GeometryError> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    for w in order.windows(2) {
        if points[w[1]].x - points[w[0]].x <= tol {
            return Err(GeometryError::DegenerateInput(points[w[0]], points[w[1]]));
        }
    }
    let mut cells = vec![ConvexCell::interval(0.0, 0.0, 0.0); points.len()];
    let mut exact = vec![false; points.len()];
    let n = order.len();
    for k in 0..n {
        let x = points[order[k]].x;
        let lo = if k > 0 {
            0.5 * (points[order[k - 1]].x + x)
        } else {
            region.min.x.min(x)
        };
        let hi = if k + 1 < n {
            0.5 * (x + points[order[k + 1]].x)
        } else {
            region.max.x.max(x)
        };
        cells[order[k]] = ConvexCell::interval(lo, hi, x);
        exact[order[k]] = k > 0 && k + 1 < n;
    }
    Ok(VoronoiDiagram {
        cells,
        exact,
        region: *region,
    })
}

fn voronoi_plane(
    points: &[Point],
    region: &Aabb,
    tol: f64,
) -> Result<VoronoiDiagram, GeometryError> {
    let spacing = (region.volume().max(tol) / points.len() as f64).sqrt();
    let index = PointIndex::new(points, Dim::Two, spacing);
    let diag = region.width().hypot(region.height()).max(spacing);
    let mut cells = Vec::with_capacity(points.len());
    let mut exact = Vec::with_capacity(points.len());
    for (i, &site) in points.iter().enumerate() {
        let mut cell = ConvexCell::from_box(region, site);
        let mut inner = 0.0f64;
        let mut outer = 2.0 * spacing;
        loop {
            let mut ring: Vec<(f64, usize)> = Vec::new();
            index.for_each_within(site, outer, |j| {
                if j != i {
                    let d = points[j].dist(site);
                    if d > inner {
                        ring.push((d, j));
                    }
                }
            });
            ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (d, j) in ring {
                if d <= tol {
                    return Err(GeometryError::DegenerateInput(site, points[j]));
                }
                if 0.5 * d > cell.max_vertex_distance(site) {
                    continue;
                }
                if let Some(c) = cell.clip(HalfPlane::bisector(site, points[j]), tol) {
                    cell = c;
                }
            }
            // Points farther than twice the cell radius cannot cut the cell.
            if 2.0 * cell.max_vertex_distance(site) <= outer || outer > 2.0 * diag {
                break;
            }
            inner = outer;
            outer *= 2.0;
        }
        let ok = cell
            .vertices
            .iter()
            .all(|&v| region.contains_ball(v, v.dist(site) + tol));
        cells.push(cell);
        exact.push(ok);
    }
    Ok(VoronoiDiagram {
        cells,
        exact,
        region: *region,
    })
}

/// Packing and covering radii of a point set observed inside a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiReport {
    pub packing_r: f64,
    pub covering_r: f64,
    /// Locations whose nearest-point certificate is fully observed.
    pub valid_region: Aabb,
}

/// `packing_r` is half the minimum pairwise distance; `covering_r` is the
/// largest empty-ball radius over Voronoi vertices whose ball is observed.
pub fn radii(points: &[Point], region: &Aabb) -> Result<RadiiReport, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::EmptyInput);
    }
    let tol = eps_for(region);
    let (packing, covering) = match region.dim {
        Dim::One => {
            let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
            xs.sort_by(f64::total_cmp);
            let mut min_gap = f64::INFINITY;
            let mut max_gap = 0.0f64;
            for w in xs.windows(2) {
                let g = w[1] - w[0];
                if g <= tol {
                    return Err(GeometryError::DegenerateInput(
                        Point::on_line(w[0]),
                        Point::on_line(w[1]),
                    ));
                }
                min_gap = min_gap.min(g);
                max_gap = max_gap.max(g);
            }
            (0.5 * min_gap, 0.5 * max_gap)
        }
        Dim::Two => {
            let vd = voronoi_cells(points, region)?;
            let mut covering = 0.0f64;
            for (cell, &site) in vd.cells.iter().zip(points) {
                for &v in &cell.vertices {
                    let rho = v.dist(site);
                    if region.contains_ball(v, rho + tol) {
                        covering = covering.max(rho);
                    }
                }
            }
            (0.5 * min_distance(points, region), covering)
        }
    };
    Ok(RadiiReport {
        packing_r: packing,
        covering_r: covering,
        valid_region: region.shrink(covering),
    })
}

fn min_distance(points: &[Point], region: &Aabb) -> f64 {
    let spacing = (region.volume().max(1e-300) / points.len() as f64).sqrt();
    let index = PointIndex::new(points, Dim::Two, spacing);
    let mut best = points[0].dist(points[1]);
    for (i, &p) in points.iter().enumerate() {
        index.for_each_within(p, best, |j| {
            if j != i {
                best = best.min(p.dist(points[j]));
            }
        });
    }
    best
}

/// Assign every puncture to the unique cell whose star set contains it.
pub fn star_partition_assign(
    cells: &[ConvexCell],
    punctures: &[Point],
) -> Result<Vec<usize>, GeometryError> {
    let Some(first) = cells.first() else {
        return Err(GeometryError::EmptyInput);
    };
    let sites: Vec<Point> = cells.iter().map(|c| c.site).collect();
    let bounds = Aabb::bounding(&sites, first.dim).expect("nonempty");
    let tol = eps_for(&bounds);
    star_assign_partial(cells, punctures, tol)?
        .into_iter()
        .zip(punctures)
        .map(|(a, &p)| a.ok_or(GeometryError::UnassignedPuncture(p)))
        .collect()
}

/// Like [`star_partition_assign`] but leaves punctures outside every cell unassigned.
pub(crate) fn star_assign_partial(
    cells: &[ConvexCell],
    punctures: &[Point],
    tol: f64,
) -> Result<Vec<Option<usize>>, GeometryError> {
    if cells.is_empty() {
        return Ok(vec![None; punctures.len()]);
    }
    let dim = cells[0].dim;
    let sites: Vec<Point> = cells.iter().map(|c| c.site).collect();
    let reach = cells
        .iter()
        .map(|c| c.max_vertex_distance(c.site))
        .fold(0.0, f64::max)
        + tol;
    let index = PointIndex::new(&sites, dim, reach.max(tol));
    let mut out = Vec::with_capacity(punctures.len());
    for &p in punctures {
        let mut owner = None;
        let mut clash = false;
        index.for_each_within(p, reach, |k| {
            if star_membership_tol(&cells[k], p, tol) {
                if owner.is_some() {
                    clash = true;
                }
                owner = Some(k);
            }
        });
        if clash {
            return Err(GeometryError::AmbiguousPuncture(p));
        }
        out.push(owner);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::star_membership;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn integer_line_cells_are_unit_intervals() {
        let pts: Vec<Point> = (-5..=5).map(|k| Point::on_line(k as f64)).collect();
        let vd = voronoi_cells(&pts, &Aabb::interval(-5.0, 5.0)).unwrap();
        for (k, c) in (-5..=5).zip(&vd.cells) {
            if k > -5 && k < 5 {
                assert_eq!(c.lo(), k as f64 - 0.5);
                assert_eq!(c.hi(), k as f64 + 0.5);
            }
        }
        assert!(!vd.exact[0] && !vd.exact[10] && vd.exact[5]);
    }

    #[test]
    fn lattice_cells_are_unit_squares() {
        let mut pts = Vec::new();
        for i in -4..=4 {
            for j in -4..=4 {
                pts.push(Point::new(i as f64, j as f64));
            }
        }
        let region = Aabb::centered(4.0, Dim::Two);
        let vd = voronoi_cells(&pts, &region).unwrap();
        let mut exact = 0;
        for (i, c) in vd.exact_cells() {
            exact += 1;
            assert!((c.measure() - 1.0).abs() < 1e-12);
            assert!(c.contains(pts[i], 0.0));
            for v in &c.vertices {
                let d = *v - pts[i];
                assert!((d.x.abs() - 0.5).abs() < 1e-12 && (d.y.abs() - 0.5).abs() < 1e-12);
            }
        }
        assert!(exact >= 25);
    }

    #[test]
    fn fibonacci_gap_midpoints() {
        // site with left gap 1 and right gap phi
        let pts = [
            Point::on_line(-1.0 - PHI),
            Point::on_line(-1.0),
            Point::on_line(0.0),
            Point::on_line(PHI),
            Point::on_line(PHI + 1.0),
        ];
        let vd = voronoi_cells(&pts, &Aabb::interval(-4.0, 4.0)).unwrap();
        let c = &vd.cells[2];
        assert!((c.lo() + 0.5).abs() < 1e-15);
        assert!((c.hi() - PHI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let pts = [Point::on_line(1.0), Point::on_line(1.0)];
        assert!(matches!(
            voronoi_cells(&pts, &Aabb::interval(0.0, 2.0)),
            Err(GeometryError::DegenerateInput(..))
        ));
        assert!(matches!(
            voronoi_cells(&[], &Aabb::interval(0.0, 2.0)),
            Err(GeometryError::EmptyInput)
        ));
    }

    #[test]
    fn lattice_radii() {
        let pts: Vec<Point> = (-100..=100).map(|k| Point::on_line(k as f64)).collect();
        let r = radii(&pts, &Aabb::interval(-100.0, 100.0)).unwrap();
        assert_eq!((r.packing_r, r.covering_r), (0.5, 0.5));

        let mut grid = Vec::new();
        for i in -6..=6 {
            for j in -6..=6 {
                grid.push(Point::new(i as f64, j as f64));
            }
        }
        let r = radii(&grid, &Aabb::centered(6.0, Dim::Two)).unwrap();
        assert!((r.packing_r - 0.5).abs() < 1e-12);
        assert!((r.covering_r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shared_boundary_goes_to_the_right_cell() {
        let cells = [
            ConvexCell::interval(0.0, 1.0, 0.5),
            ConvexCell::interval(1.0, 2.0, 1.5),
        ];
        let a = star_partition_assign(&cells, &[Point::on_line(1.0), Point::on_line(0.2)]).unwrap();
        assert_eq!(a, vec![1, 0]);
        assert!(matches!(
            star_partition_assign(&cells, &[Point::on_line(2.0)]),
            Err(GeometryError::UnassignedPuncture(_))
        ));
    }

    #[test]
    fn star_membership_is_translation_equivariant() {
        let c = ConvexCell::interval(-0.5, 0.8, 0.0);
        let v = Point::on_line(12.25);
        for x in [-0.5, 0.8, 0.0, 0.79, -0.51] {
            let p = Point::on_line(x);
            assert_eq!(
                star_membership(&c, p),
                star_membership(&c.translate(v), p + v)
            );
        }
    }
}
