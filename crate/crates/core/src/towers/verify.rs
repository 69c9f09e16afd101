use super::shape::{same_placements, sort_placements, Face};
use super::{Placement, TowerLevel, TransitionMatrix};
use crate::geometry::{eps_for, Dim, Point, PointIndex};
use serde::{Deserialize, Serialize};

/// Outcome of checking that `next` is zoomed out of `prev`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoomReport {
    pub n: usize,
    /// Every tile of a class decomposes at the same offsets.
    pub z1: bool,
    /// Boundary faces of each tile are boundary faces of its children.
    pub z2: bool,
    /// Each tile contains a child tile in its interior.
    pub z3: bool,
    /// Children have disjoint interiors and every previous tile in the valid
    /// region belongs to exactly one next tile.
    pub z4: bool,
    /// Next punctures are previous punctures.
    pub z5: bool,
    /// Matrix entries equal the child counts of the shapes.
    pub matrix_consistent: bool,
    /// `|Σ_i count_i leb(D_i) - vol(valid)| / vol(valid)`.
    pub area_residual: f64,
    /// Boundary-band allowance for the residual.
    pub area_tolerance: f64,
    pub failures: Vec<String>,
}

impl ZoomReport {
    pub fn all_pass(&self) -> bool {
        self.z1
            && self.z2
            && self.z3
            && self.z4
            && self.z5
            && self.matrix_consistent
            && self.area_ok()
    }

    pub fn area_ok(&self) -> bool {
        self.area_residual <= self.area_tolerance
    }
}

pub fn verify_zoom(prev: &TowerLevel, next: &TowerLevel, m: &TransitionMatrix) -> ZoomReport {
    let tol = 3.0 * eps_for(&prev.complete_region);
    let mut failures = Vec::new();

    // (Z.1)
    let mut z1 = true;
    for p in next.punctures.iter().filter(|p| p.trusted) {
        let c = p.class.expect("trusted");
        let mut pl: Vec<Placement> = Vec::with_capacity(p.children.len());
        for &k in &p.children {
            let q = &prev.punctures[k as usize];
            match q.class {
                Some(cls) => pl.push(Placement {
                    offset: q.position - p.position,
                    class: cls,
                }),
                None => z1 = false,
            }
        }
        sort_placements(&mut pl);
        if !same_placements(next.shapes[c].placements(), &pl, tol) {
            z1 = false;
            failures.push(format!(
                "Z.1: tile at {:?} differs from class {c}",
                p.position
            ));
        }
    }

    // (Z.2)
    let mut z2 = true;
    for (i, g) in next.geometry.iter().enumerate() {
        let child_faces: Vec<Face> = next.shapes[i]
            .placements()
            .iter()
            .flat_map(|p| prev.geometry[p.class].translated_exterior(p.offset))
            .collect();
        let mids: Vec<Point> = child_faces.iter().map(Face::midpoint).collect();
        let index = PointIndex::new(&mids, next.dim, prev.stats.r_ext.max(tol));
        for f in &g.exterior {
            let mut found = false;
            index.for_each_within(f.midpoint(), tol, |k| {
                found |= child_faces[k].same_as(f, tol)
            });
            if !found {
                z2 = false;
                failures.push(format!(
                    "Z.2: class {i} face at {:?} is not a child face",
                    f.midpoint()
                ));
                break;
            }
        }
    }

    // (Z.3)
    let mut z3 = true;
    for (i, g) in next.geometry.iter().enumerate() {
        let anchor = next.shapes[i]
            .placements()
            .iter()
            .find(|p| p.offset.approx_eq(Point::ORIGIN, tol));
        let ok = anchor.is_some_and(|a| {
            prev.geometry[a.class]
                .translated_exterior(a.offset)
                .all(|cf| g.exterior.iter().all(|f| f.distance_to_face(&cf) > tol))
        });
        if !ok {
            z3 = false;
            failures.push(format!(
                "Z.3: class {i} has no interior child at its anchor"
            ));
        }
    }

    // (Z.4) disjoint children
    let mut z4 = true;
    for (i, s) in next.shapes.iter().enumerate() {
        if !children_disjoint(s.placements(), prev, tol) {
            z4 = false;
            failures.push(format!("Z.4: children of class {i} overlap"));
        }
    }
    // (Z.4) coverage of the valid region
    let mut owners = vec![0u32; prev.punctures.len()];
    for p in next.punctures.iter().filter(|p| p.trusted) {
        for &k in &p.children {
            owners[k as usize] += 1;
        }
    }
    let region = next.valid_region;
    let mut uncovered = 0usize;
    for (k, q) in prev.punctures.iter().enumerate() {
        if region.contains(q.position) && (!q.trusted || owners[k] != 1) {
            uncovered += 1;
        }
    }
    if uncovered > 0 {
        z4 = false;
        failures.push(format!(
            "Z.4: {uncovered} previous tiles in the valid region are not covered exactly once"
        ));
    }

    // (Z.5)
    let mut z5 = true;
    for p in next.punctures.iter().filter(|p| p.trusted) {
        if prev.find_puncture(p.position, tol).is_none() {
            z5 = false;
            failures.push(format!("Z.5: {:?} is not a previous puncture", p.position));
            break;
        }
    }

    let mut matrix_consistent = m.rows() == next.t() && (next.t() == 0 || m.cols() == prev.t());
    if matrix_consistent {
        for (i, s) in next.shapes.iter().enumerate() {
            let mut row = vec![0u64; prev.t()];
            for p in s.placements() {
                row[p.class] += 1;
            }
            matrix_consistent &= row == m.entries[i];
        }
    }
    if !matrix_consistent {
        failures.push("transition matrix disagrees with the shapes".into());
    }

    let counts = next.class_counts(&region);
    let covered: f64 = counts
        .iter()
        .zip(&next.geometry)
        .map(|(&c, g)| c as f64 * g.measure)
        .sum();
    let vol = region.volume();
    let area_residual = (covered - vol).abs() / vol;
    let area_tolerance = 2.0 * next.stats.r_ext * region.boundary_measure() / vol;

    ZoomReport {
        n: next.n,
        z1,
        z2,
        z3,
        z4,
        z5,
        matrix_consistent,
        area_residual,
        area_tolerance,
        failures,
    }
}

fn children_disjoint(pl: &[Placement], prev: &TowerLevel, tol: f64) -> bool {
    match prev.dim {
        Dim::One => {
            let mut iv: Vec<(f64, f64)> = pl
                .iter()
                .flat_map(|p| {
                    prev.geometry[p.class]
                        .pieces
                        .iter()
                        .map(move |c| (c.lo() + p.offset.x, c.hi() + p.offset.x))
                })
                .collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            iv.windows(2).all(|w| w[1].0 >= w[0].1 - tol)
        }
        Dim::Two => {
            let mut pieces: Vec<(usize, crate::geometry::ConvexCell)> = pl
                .iter()
                .enumerate()
                .flat_map(|(k, p)| {
                    prev.geometry[p.class]
                        .pieces
                        .iter()
                        .map(move |c| (k, c.translate(p.offset)))
                })
                .collect();
            pieces.sort_by(|a, b| a.1.bbox().min.x.total_cmp(&b.1.bbox().min.x));
            for a in 0..pieces.len() {
                let ba = pieces[a].1.bbox();
                for b in a + 1..pieces.len() {
                    let bb = pieces[b].1.bbox();
                    if bb.min.x > ba.max.x - tol {
                        break;
                    }
                    if !ba.shrink(tol).intersects(&bb.shrink(tol)) {
                        continue;
                    }
                    let mut clip = Some(pieces[a].1.clone());
                    for h in &pieces[b].1.halfplanes {
                        clip = clip.and_then(|c| c.clip(*h, tol));
                    }
                    if clip.is_some_and(|c| c.measure() > tol * ba.width().max(1.0)) {
                        return false;
                    }
                }
            }
            true
        }
    }
}
