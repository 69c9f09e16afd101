use super::{DeloneError, Patch};
use crate::geometry::{Point, REL_EPS};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A translation class of patches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternClassId {
    pub id: usize,
    /// Sorted relative points snapped to the tolerance grid.
    pub canonical_form: Vec<(i64, i64)>,
}

#[derive(Clone, Debug)]
pub struct Classification {
    /// Class index of each input patch.
    pub ids: Vec<usize>,
    pub classes: Vec<PatternClassId>,
}

pub fn canonical_form(relative: &[Point], eps: f64) -> Vec<(i64, i64)> {
    let mut k: Vec<(i64, i64)> = relative.iter().map(|p| p.grid_key(eps)).collect();
    k.sort_unstable();
    k
}

/// Whether two relative point lists agree up to `tol` (sup-norm) per point.
pub fn same_pattern(a: &[Point], b: &[Point], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut bs: Vec<Point> = b.to_vec();
    bs.sort_by(|p, q| p.x.total_cmp(&q.x));
    let mut used = vec![false; bs.len()];
    'outer: for p in a {
        let lo = bs.partition_point(|q| q.x < p.x - tol);
        for j in lo..bs.len() {
            if bs[j].x > p.x + tol {
                break;
            }
            if !used[j] && bs[j].approx_eq(*p, tol) {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Incremental classifier: grid key first, tolerance match second.
#[derive(Debug, Default)]
pub(crate) struct PatchClassifier {
    eps: f64,
    by_key: HashMap<Vec<(i64, i64)>, usize>,
    by_len: HashMap<usize, Vec<usize>>,
    reps: Vec<Vec<Point>>,
}

impl PatchClassifier {
    pub fn new(eps: f64) -> Self {
        PatchClassifier {
            eps,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, relative: &[Point]) -> usize {
        let key = canonical_form(relative, self.eps);
        if let Some(&c) = self.by_key.get(&key) {
            return c;
        }
        let tol = 3.0 * self.eps;
        if let Some(cands) = self.by_len.get(&relative.len()) {
            if let Some(&c) = cands
                .iter()
                .find(|&&c| same_pattern(relative, &self.reps[c], tol))
            {
                self.by_key.insert(key, c);
                return c;
            }
        }
        let c = self.reps.len();
        self.reps.push(relative.to_vec());
        self.by_len.entry(relative.len()).or_default().push(c);
        self.by_key.insert(key, c);
        c
    }

    /// Provisional-to-canonical relabelling and the sorted class list.
    pub fn finish(self) -> (Vec<usize>, Vec<PatternClassId>) {
        let eps = self.eps;
        let forms: Vec<Vec<(i64, i64)>> =
            self.reps.iter().map(|r| canonical_form(r, eps)).collect();
        canonical_order(forms)
    }
}

/// Sort classes by canonical form; returns `old -> new` and the classes.
pub(crate) fn canonical_order(forms: Vec<Vec<(i64, i64)>>) -> (Vec<usize>, Vec<PatternClassId>) {
    let mut order: Vec<usize> = (0..forms.len()).collect();
    order.sort_by(|&a, &b| forms[a].cmp(&forms[b]).then(a.cmp(&b)));
    let mut relabel = vec![0; forms.len()];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let mut forms: Vec<Option<Vec<(i64, i64)>>> = forms.into_iter().map(Some).collect();
    let classes = order
        .iter()
        .enumerate()
        .map(|(id, &old)| PatternClassId {
            id,
            canonical_form: forms[old].take().unwrap_or_default(),
        })
        .collect();
    (relabel, classes)
}

/// Partition patches of a common radius into translation classes.
pub fn classify(patches: &[Patch]) -> Result<Classification, DeloneError> {
    let Some(first) = patches.first() else {
        return Ok(Classification {
            ids: Vec::new(),
            classes: Vec::new(),
        });
    };
    let scale = patches
        .iter()
        .map(|p| p.center.x.abs().max(p.center.y.abs()))
        .fold(first.radius.abs(), f64::max)
        .max(1.0);
    let eps = REL_EPS * scale;
    if let Some(p) = patches
        .iter()
        .find(|p| (p.radius - first.radius).abs() > eps)
    {
        return Err(DeloneError::MixedRadii(first.radius, p.radius));
    }
    let mut c = PatchClassifier::new(eps);
    let provisional: Vec<usize> = patches
        .iter()
        .map(|p| c.insert(&p.relative_points))
        .collect();
    let (relabel, classes) = c.finish();
    Ok(Classification {
        ids: provisional.into_iter().map(|i| relabel[i]).collect(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(c: f64, rel: &[f64]) -> Patch {
        Patch {
            center: Point::on_line(c),
            radius: 2.0,
            relative_points: rel.iter().map(|&x| Point::on_line(x)).collect(),
        }
    }

    #[test]
    fn translates_share_a_class_and_ids_are_canonical() {
        let ps = [
            patch(10.0, &[0.0, 1.5]),
            patch(0.0, &[-1.0, 0.0]),
            patch(3.0, &[0.0, 1.5 + 1e-12]),
        ];
        let c = classify(&ps).unwrap();
        assert_eq!(c.classes.len(), 2);
        assert_eq!(c.ids[0], c.ids[2]);
        // [-1, 0] sorts before [0, 1.5].
        assert_eq!(c.ids, vec![1, 0, 1]);
    }

    #[test]
    fn mixed_radii_rejected() {
        let mut ps = vec![patch(0.0, &[0.0])];
        let mut q = patch(1.0, &[0.0]);
        q.radius = 3.0;
        ps.push(q);
        assert!(matches!(classify(&ps), Err(DeloneError::MixedRadii(..))));
    }

    #[test]
    fn tolerance_match_bridges_grid_boundaries() {
        let eps = 1e-6;
        let a = [Point::new(0.0, 0.0), Point::new(1.0 + 0.49e-6, 0.0)];
        let b = [Point::new(0.0, 0.0), Point::new(1.0 + 0.51e-6, 0.0)];
        assert_ne!(canonical_form(&a, eps), canonical_form(&b, eps));
        let mut c = PatchClassifier::new(eps);
        assert_eq!(c.insert(&a), c.insert(&b));
    }
}
