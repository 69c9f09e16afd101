//! Finite windows of linearly repetitive Delone sets, their patches,
//! pattern classes, occurrence sets and repetitivity profiles.

mod classify;
mod generator;
mod io;
mod line;

pub use classify::{canonical_form, classify, same_pattern, Classification, PatternClassId};
pub use generator::{GeneratorKind, GeneratorSpec, LetterRule, SubstitutionRule, PHI};
pub use io::{format_real, read_metadata, read_points_csv, write_metadata, write_points_csv};

use crate::geometry::{eps_for, radii, Aabb, Dim, GeometryError, Point, PointIndex};
use classify::{canonical_order, PatchClassifier};
use line::{GapIndex, LineKey};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeloneError {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("substitution is not primitive")]
    NonPrimitiveSubstitution,
    #[error("invalid generator: {0}")]
    InvalidSpec(String),
    #[error("ball of radius {radius} around {center:?} leaves the window")]
    BoundaryViolation { center: Point, radius: f64 },
    #[error("{0:?} is not a point of the set")]
    CenterNotInSet(Point),
    #[error("patches have different radii ({0} and {1})")]
    MixedRadii(f64, f64),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("the origin is not a point of the set")]
    NoOrigin,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o: {0}")]
    Io(String),
}

/// The points of a set within a closed ball, recentred at the ball's centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub center: Point,
    pub radius: f64,
    /// Sorted lexicographically.
    pub relative_points: Vec<Point>,
}

/// A finite sample of a Delone set together with its observation window.
#[derive(Clone, Debug)]
pub struct DeloneWindow {
    /// Sorted lexicographically.
    pub points: Vec<Point>,
    pub window: Aabb,
    pub dim: Dim,
    pub r_disc: f64,
    pub r_dense: f64,
    pub generator: GeneratorSpec,
    pub periodic: bool,
    /// Absolute geometric tolerance for this window.
    pub eps: f64,
    origin: usize,
    index: PointIndex,
    line: Option<GapIndex>,
}

pub fn generate(spec: &GeneratorSpec, target_extent: f64) -> Result<DeloneWindow, DeloneError> {
    let g = generator::generate_points(spec, target_extent)?;
    DeloneWindow::from_parts(g.points, g.window, spec.clone(), g.periodic)
}

impl DeloneWindow {
    pub fn from_parts(
        mut points: Vec<Point>,
        window: Aabb,
        generator: GeneratorSpec,
        periodic: bool,
    ) -> Result<Self, DeloneError> {
        let dim = window.dim;
        if points.len() < 2 {
            return Err(GeometryError::EmptyInput.into());
        }
        points.sort_by(|a, b| a.lex_cmp(b));
        let eps = eps_for(&window);
        let origin = points
            .binary_search_by(|p| p.lex_cmp(&Point::ORIGIN))
            .or_else(|_| {
                points
                    .iter()
                    .position(|p| p.approx_eq(Point::ORIGIN, eps))
                    .ok_or(DeloneError::NoOrigin)
            })?;
        let rr = radii(&points, &window)?;
        let index = PointIndex::new(&points, dim, rr.packing_r.max(eps) * 2.0);
        let line = match dim {
            Dim::One => Some(GapIndex::new(
                &points.iter().map(|p| p.x).collect::<Vec<_>>(),
                eps,
            )),
            Dim::Two => None,
        };
        Ok(DeloneWindow {
            points,
            window,
            dim,
            r_disc: rr.packing_r,
            r_dense: rr.covering_r,
            generator,
            periodic,
            eps,
            origin,
            index,
            line,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position of the origin in `points`.
    pub fn origin_index(&self) -> usize {
        self.origin
    }

    pub fn index(&self) -> &PointIndex {
        &self.index
    }

    pub fn find(&self, p: Point) -> Option<usize> {
        self.index.find(p, self.eps)
    }

    /// Indices (ascending, hence lexicographic) of points in a closed box.
    pub fn indices_in(&self, region: &Aabb) -> Vec<usize> {
        self.index.in_box(region)
    }

    /// Region of centres whose closed `s`-ball lies in the window.
    pub fn patch_region(&self, s: f64) -> Aabb {
        self.window.shrink(s)
    }

    pub fn patch_at(&self, center: Point, s: f64) -> Result<Patch, DeloneError> {
        let i = self
            .find(center)
            .ok_or(DeloneError::CenterNotInSet(center))?;
        self.check_ball(i, s)?;
        Ok(self.patch_of(i, s))
    }

    fn check_ball(&self, i: usize, s: f64) -> Result<(), DeloneError> {
        let c = self.points[i];
        if self.window.boundary_distance(c) < s - self.eps {
            return Err(DeloneError::BoundaryViolation {
                center: c,
                radius: s,
            });
        }
        Ok(())
    }

    /// Patch at point `i` without the window check.
    pub(crate) fn patch_of(&self, i: usize, s: f64) -> Patch {
        let c = self.points[i];
        let mut rel: Vec<Point> = self
            .index
            .within(c, s + self.eps)
            .into_iter()
            .map(|j| self.points[j] - c)
            .collect();
        rel.sort_by(|a, b| a.lex_cmp(b));
        Patch {
            center: c,
            radius: s,
            relative_points: rel,
        }
    }

    /// Classify the `s`-patches at the given point indices.
    ///
    /// Returns the class of each index (canonical numbering) and one
    /// representative patch per class.
    pub fn classify_indices(
        &self,
        idx: &[usize],
        s: f64,
    ) -> Result<(Vec<usize>, Vec<Patch>), DeloneError> {
        for &i in idx {
            self.check_ball(i, s)?;
        }
        match &self.line {
            Some(g) => {
                let keys: Vec<LineKey> =
                    idx.par_iter().map(|&i| g.key_at(i, s, self.eps)).collect();
                let mut first: HashMap<LineKey, usize> = HashMap::new();
                let mut reps: Vec<usize> = Vec::new();
                let provisional: Vec<usize> = keys
                    .iter()
                    .zip(idx)
                    .map(|(k, &i)| {
                        *first.entry(*k).or_insert_with(|| {
                            reps.push(i);
                            reps.len() - 1
                        })
                    })
                    .collect();
                let patches: Vec<Patch> = reps.iter().map(|&i| self.patch_of(i, s)).collect();
                let forms = patches
                    .iter()
                    .map(|p| canonical_form(&p.relative_points, self.eps))
                    .collect();
                let (relabel, _) = canonical_order(forms);
                Ok(reorder(provisional, patches, &relabel))
            }
            None => {
                let patches: Vec<Patch> = idx.par_iter().map(|&i| self.patch_of(i, s)).collect();
                let mut c = PatchClassifier::new(self.eps);
                let mut reps = Vec::new();
                let provisional: Vec<usize> = patches
                    .iter()
                    .map(|p| {
                        let k = c.insert(&p.relative_points);
                        if k == reps.len() {
                            reps.push(p.clone());
                        }
                        k
                    })
                    .collect();
                let (relabel, _) = c.finish();
                Ok(reorder(provisional, reps, &relabel))
            }
        }
    }

    /// Point indices in `region` whose patch (of the representative's
    /// radius) is a translate of `class_rep`.
    pub fn occurrence_indices(
        &self,
        class_rep: &Patch,
        region: &Aabb,
    ) -> Result<Vec<usize>, DeloneError> {
        let s = class_rep.radius;
        let cands = self.indices_in(region);
        for &i in &cands {
            self.check_ball(i, s)?;
        }
        match &self.line {
            Some(g) => {
                let Some(key) = g.key_of(&class_rep.relative_points, self.eps) else {
                    return Ok(Vec::new());
                };
                Ok(cands
                    .into_par_iter()
                    .filter(|&i| g.key_at(i, s, self.eps) == key)
                    .collect())
            }
            None => {
                let n = class_rep.relative_points.len();
                let tol = 3.0 * self.eps;
                Ok(cands
                    .into_par_iter()
                    .filter(|&i| {
                        let c = self.points[i];
                        let mut count = 0;
                        self.index.for_each_within(c, s + self.eps, |_| count += 1);
                        count == n
                            && same_pattern(
                                &self.patch_of(i, s).relative_points,
                                &class_rep.relative_points,
                                tol,
                            )
                    })
                    .collect())
            }
        }
    }

    pub fn occurrences(&self, class_rep: &Patch, region: &Aabb) -> Result<Vec<Point>, DeloneError> {
        Ok(self
            .occurrence_indices(class_rep, region)?
            .into_iter()
            .map(|i| self.points[i])
            .collect())
    }
}

fn reorder(
    provisional: Vec<usize>,
    reps: Vec<Patch>,
    relabel: &[usize],
) -> (Vec<usize>, Vec<Patch>) {
    let mut sorted: Vec<Option<Patch>> = vec![None; reps.len()];
    for (old, p) in reps.into_iter().enumerate() {
        sorted[relabel[old]] = Some(p);
    }
    (
        provisional.into_iter().map(|k| relabel[k]).collect(),
        sorted.into_iter().flatten().collect(),
    )
}

/// Free-function form of [`DeloneWindow::patch_at`].
pub fn patch_at(x: &DeloneWindow, center: Point, s: f64) -> Result<Patch, DeloneError> {
    x.patch_at(center, s)
}

/// Free-function form of [`DeloneWindow::occurrences`].
pub fn occurrences(
    x: &DeloneWindow,
    class_rep: &Patch,
    region: &Aabb,
) -> Result<Vec<Point>, DeloneError> {
    x.occurrences(class_rep, region)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub s: f64,
    /// Running maximum of `m_raw`.
    pub m_hat: f64,
    /// Largest covering radius over the occurrence sets of the `s`-classes.
    pub m_raw: f64,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitivityProfile {
    pub samples: Vec<ProfileSample>,
    pub l_hat: f64,
}

impl RepetitivityProfile {
    /// `m_hat` at the smallest sampled radius `>= s` (or the last sample).
    pub fn m_at(&self, s: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|p| p.s >= s)
            .or(self.samples.last())
            .map(|p| p.m_hat)
    }
}

/// Empirical repetitivity function: for each radius, the least `M` such that
/// every `M`-ball in the observed region meets every patch class.
pub fn repetitivity_profile(
    x: &DeloneWindow,
    s_values: &[f64],
) -> Result<RepetitivityProfile, DeloneError> {
    let mut ss: Vec<f64> = s_values.to_vec();
    ss.sort_by(f64::total_cmp);
    ss.dedup();
    let mut samples = Vec::with_capacity(ss.len());
    let mut running = 0.0f64;
    for &s in &ss {
        if s.is_nan() || s <= 0.0 {
            return Err(DeloneError::InvalidSpec(format!(
                "radius {s} must be positive"
            )));
        }
        let region = x.patch_region(s);
        if region.is_empty() {
            return Err(DeloneError::WindowTooSmall(format!(
                "no centre fits radius {s}"
            )));
        }
        let idx = x.indices_in(&region);
        let (ids, reps) = x.classify_indices(&idx, s)?;
        let mut groups: Vec<Vec<Point>> = vec![Vec::new(); reps.len()];
        for (&i, &c) in idx.iter().zip(&ids) {
            groups[c].push(x.points[i]);
        }
        let covs = groups
            .par_iter()
            .map(|occ| {
                if occ.len() < 2 {
                    return Err(DeloneError::WindowTooSmall(format!(
                        "a radius-{s} class occurs fewer than twice"
                    )));
                }
                Ok(radii(occ, &region)?.covering_r)
            })
            .collect::<Result<Vec<f64>, DeloneError>>()?;
        let m_raw = covs.into_iter().fold(0.0, f64::max);
        if region.min_extent() < 4.0 * m_raw {
            return Err(DeloneError::WindowTooSmall(format!(
                "region of side {} cannot hold two disjoint {m_raw}-balls",
                region.min_extent()
            )));
        }
        running = running.max(m_raw);
        samples.push(ProfileSample {
            s,
            m_hat: running,
            m_raw,
            classes: reps.len(),
        });
    }
    let l_hat = samples.iter().map(|p| p.m_hat / p.s).fold(0.0, f64::max);
    Ok(RepetitivityProfile { samples, l_hat })
}

/// Return-vector bounds for the cylinder of the origin's `s`-patch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnBounds {
    pub s: f64,
    pub packing_r: f64,
    pub covering_r: f64,
    /// `s / (2 (L + 1))`.
    pub lower: f64,
    /// `L s`.
    pub upper: f64,
    pub holds: bool,
}

pub fn return_bounds(x: &DeloneWindow, s: f64, l: f64) -> Result<ReturnBounds, DeloneError> {
    let region = x.patch_region(s);
    let rep = x.patch_at(Point::ORIGIN, s)?;
    let occ = x.occurrences(&rep, &region)?;
    if occ.len() < 2 {
        return Err(DeloneError::WindowTooSmall(format!(
            "origin {s}-patch occurs once"
        )));
    }
    let rr = radii(&occ, &region)?;
    let lower = s / (2.0 * (l + 1.0));
    let upper = l * s;
    Ok(ReturnBounds {
        s,
        packing_r: rr.packing_r,
        covering_r: rr.covering_r,
        lower,
        upper,
        holds: rr.packing_r >= lower - x.eps && rr.covering_r <= upper + x.eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integers(e: f64) -> DeloneWindow {
        generate(&GeneratorSpec::lattice(1), e).unwrap()
    }

    #[test]
    fn lattice_radii() {
        let z = integers(10.0);
        assert_eq!(z.len(), 21);
        assert!((z.r_disc - 0.5).abs() < 1e-12 && (z.r_dense - 0.5).abs() < 1e-12);
    }

    #[test]
    fn patches_of_integers() {
        let z = integers(10.0);
        let p = z.patch_at(Point::ORIGIN, 1.5).unwrap();
        let xs: Vec<f64> = p.relative_points.iter().map(|q| q.x).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(
            z.patch_at(Point::ORIGIN, 0.99)
                .unwrap()
                .relative_points
                .len(),
            1
        );
        assert!(matches!(
            z.patch_at(Point::on_line(9.0), 1.5),
            Err(DeloneError::BoundaryViolation { .. })
        ));
        assert!(matches!(
            z.patch_at(Point::on_line(0.5), 1.0),
            Err(DeloneError::CenterNotInSet(_))
        ));
    }

    #[test]
    fn integer_patches_form_one_class() {
        let z = integers(20.0);
        let idx = z.indices_in(&z.patch_region(1.5));
        let (ids, reps) = z.classify_indices(&idx, 1.5).unwrap();
        assert_eq!(reps.len(), 1);
        assert!(ids.iter().all(|&c| c == 0));
    }

    #[test]
    fn occurrences_on_integers() {
        let z = integers(10.0);
        let single = z.patch_at(Point::ORIGIN, 0.4).unwrap();
        let region = Aabb::interval(-3.0, 3.0);
        assert_eq!(z.occurrences(&single, &region).unwrap().len(), 7);
        let foreign = Patch {
            center: Point::ORIGIN,
            radius: 2.0,
            relative_points: vec![Point::ORIGIN, Point::on_line(std::f64::consts::SQRT_2)],
        };
        assert!(z.occurrences(&foreign, &region).unwrap().is_empty());
    }

    #[test]
    fn integer_profile() {
        let z = integers(60.0);
        let prof = repetitivity_profile(&z, &[1.0, 2.5, 5.0]).unwrap();
        for p in &prof.samples {
            assert!(p.m_hat <= p.s + 1.0);
        }
    }

    #[test]
    fn product_is_cartesian() {
        let f = generate(&GeneratorSpec::fibonacci(), 12.0).unwrap();
        let p = generate(
            &GeneratorSpec::product(GeneratorSpec::fibonacci(), GeneratorSpec::fibonacci()),
            12.0,
        )
        .unwrap();
        assert_eq!(p.len(), f.len() * f.len());
        assert!(!p.periodic);
        for a in &f.points {
            assert!(p.find(Point::new(a.x, 0.0)).is_some());
        }
    }
}
