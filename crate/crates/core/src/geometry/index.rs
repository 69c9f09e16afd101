use super::{Aabb, Dim, Point};
use std::collections::HashMap;

/// Uniform-bucket spatial index over a fixed point list.
///
/// In 1D the points are kept in x-sorted order and queries are binary
/// searches; in 2D points are hashed into square buckets of side `cell`.
#[derive(Clone, Debug)]
pub enum PointIndex {
    Line {
        /// Indices into the original slice, sorted by x.
        order: Vec<u32>,
        xs: Vec<f64>,
    },
    Grid {
        cell: f64,
        buckets: HashMap<(i64, i64), Vec<u32>>,
        points: Vec<Point>,
    },
}

impl PointIndex {
    pub fn new(points: &[Point], dim: Dim, cell: f64) -> Self {
        match dim {
            Dim::One => {
                let mut order: Vec<u32> = (0..points.len() as u32).collect();
                if !points.windows(2).all(|w| w[0].x <= w[1].x) {
                    order.sort_by(|&a, &b| points[a as usize].x.total_cmp(&points[b as usize].x));
                }
                let xs = order.iter().map(|&i| points[i as usize].x).collect();
                PointIndex::Line { order, xs }
            }
            Dim::Two => {
                let cell = if cell > 0.0 && cell.is_finite() {
                    cell
                } else {
                    1.0
                };
                let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
                for (i, p) in points.iter().enumerate() {
                    buckets.entry(key(*p, cell)).or_default().push(i as u32);
                }
                PointIndex::Grid {
                    cell,
                    buckets,
                    points: points.to_vec(),
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PointIndex::Line { order, .. } => order.len(),
            PointIndex::Grid { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visit every index whose point lies within closed distance `r` of `c`.
    pub fn for_each_within(&self, c: Point, r: f64, mut f: impl FnMut(usize)) {
        match self {
            PointIndex::Line { order, xs } => {
                let lo = xs.partition_point(|&x| x < c.x - r);
                let hi = xs.partition_point(|&x| x <= c.x + r);
                for &i in &order[lo..hi] {
                    f(i as usize);
                }
            }
            PointIndex::Grid {
                cell,
                buckets,
                points,
            } => {
                let (x0, y0) = key(Point::new(c.x - r, c.y - r), *cell);
                let (x1, y1) = key(Point::new(c.x + r, c.y + r), *cell);
                let r2 = r * r;
                for gx in x0..=x1 {
                    for gy in y0..=y1 {
                        if let Some(b) = buckets.get(&(gx, gy)) {
                            for &i in b {
                                if (points[i as usize] - c).norm_sq() <= r2 {
                                    f(i as usize);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn within(&self, c: Point, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(c, r, |i| out.push(i));
        out
    }

    /// Indices of points in the closed box.
    pub fn in_box(&self, b: &Aabb) -> Vec<usize> {
        match self {
            PointIndex::Line { order, xs } => {
                let lo = xs.partition_point(|&x| x < b.min.x);
                let hi = xs.partition_point(|&x| x <= b.max.x);
                order[lo..hi].iter().map(|&i| i as usize).collect()
            }
            PointIndex::Grid {
                cell,
                buckets,
                points,
            } => {
                let (x0, y0) = key(b.min, *cell);
                let (x1, y1) = key(b.max, *cell);
                let mut out = Vec::new();
                for gx in x0..=x1 {
                    for gy in y0..=y1 {
                        if let Some(bk) = buckets.get(&(gx, gy)) {
                            out.extend(
                                bk.iter()
                                    .map(|&i| i as usize)
                                    .filter(|&i| b.contains(points[i])),
                            );
                        }
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }

    /// Index of a point within sup-distance `tol` of `p`.
    pub fn find(&self, p: Point, tol: f64) -> Option<usize> {
        let mut hit = None;
        self.for_each_within(p, tol * 1.5, |i| {
            if hit.is_none() {
                hit = Some(i);
            }
        });
        hit
    }

    /// Nearest indexed point to `p` (ties broken by lowest index).
    pub fn nearest(&self, p: Point) -> Option<usize> {
        match self {
            PointIndex::Line { order, xs } => {
                if xs.is_empty() {
                    return None;
                }
                let k = xs.partition_point(|&x| x < p.x);
                let mut best: Option<(f64, usize)> = None;
                for j in [k.wrapping_sub(1), k] {
                    if j < xs.len() {
                        let d = (xs[j] - p.x).abs();
                        let i = order[j] as usize;
                        if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
                best.map(|b| b.1)
            }
            PointIndex::Grid {
                cell,
                buckets,
                points,
            } => {
                if points.is_empty() {
                    return None;
                }
                let (cx, cy) = key(p, *cell);
                let mut best: Option<(f64, usize)> = None;
                let mut ring = 0i64;
                loop {
                    for gx in cx - ring..=cx + ring {
                        for gy in cy - ring..=cy + ring {
                            if (gx - cx).abs() != ring && (gy - cy).abs() != ring {
                                continue;
                            }
                            if let Some(b) = buckets.get(&(gx, gy)) {
                                for &i in b {
                                    let d = (points[i as usize] - p).norm_sq();
                                    let i = i as usize;
                                    if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                        best = Some((d, i));
                                    }
                                }
                            }
                        }
                    }
                    if let Some((d, _)) = best {
                        // Every unvisited bucket is at least `ring * cell` away.
                        if d.sqrt() <= ring as f64 * cell {
                            return best.map(|b| b.1);
                        }
                    }
                    ring += 1;
                    if ring > 1 << 20 {
                        return best.map(|b| b.1);
                    }
                }
            }
        }
    }
}

fn key(p: Point, cell: f64) -> (i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_queries_match_brute_force() {
        let pts: Vec<Point> = (0..200)
            .map(|i| {
                let t = i as f64;
                Point::new((t * 0.618).fract() * 20.0, (t * 0.414).fract() * 20.0)
            })
            .collect();
        let idx = PointIndex::new(&pts, Dim::Two, 1.5);
        let c = Point::new(7.3, 9.1);
        let mut got = idx.within(c, 3.0);
        got.sort_unstable();
        let want: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].dist(c) <= 3.0).collect();
        assert_eq!(got, want);
        let near = idx.nearest(c).unwrap();
        let best = (0..pts.len())
            .min_by(|&a, &b| pts[a].dist(c).total_cmp(&pts[b].dist(c)))
            .unwrap();
        assert_eq!(near, best);
    }

    #[test]
    fn line_index_box_and_nearest() {
        let pts: Vec<Point> = (-5..=5).map(|i| Point::on_line(i as f64)).collect();
        let idx = PointIndex::new(&pts, Dim::One, 1.0);
        assert_eq!(idx.in_box(&Aabb::interval(-1.0, 1.0)), vec![4, 5, 6]);
        assert_eq!(idx.nearest(Point::on_line(2.4)), Some(7));
        assert_eq!(idx.find(Point::on_line(3.0), 1e-9), Some(8));
        assert_eq!(idx.find(Point::on_line(3.5), 1e-9), None);
    }
}
