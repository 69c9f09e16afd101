//! Patch-frequency deviations over cubes: counting, frequency estimates, the
//! greedy tile decomposition of a cube, the matrix identities for tile
//! deviations, and sweeps over growing cubes.

mod decompose;
mod sweep;

pub use decompose::{
    cube_decomposition, BoundCount, CubeDecomposition, DecompositionConstants, TileLocator,
};
pub use sweep::{
    deviation_sweep, halton, mann_kendall, CubeCheck, DeviationRecord, MannKendall, SweepFit,
    SweepResult,
};

use crate::delone::{canonical_form, DeloneError, DeloneWindow, Patch, PatternClassId};
use crate::geometry::{star_membership, Aabb, Point, PointIndex};
use crate::markov::{p_product, TransverseMeasures};
use crate::towers::TowerSystem;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeviationError {
    #[error("cube {cube:?} grown by {radius} leaves the window")]
    BoundaryViolation { cube: Aabb, radius: f64 },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("no level resolves radius-{s} patches (largest k_n - R_ext is {best})")]
    TowerTooShallow { s: f64, best: f64 },
    #[error("no tile of level {0} or above fits in the cube")]
    NoFullTile(usize),
    #[error("cube is not inside the valid region of level {0}")]
    OutsideValidRegion(usize),
    #[error("level {level} class {class} has no representative tile")]
    NoRepresentative { level: usize, class: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Delone(#[from] DeloneError),
}

/// Occurrences of one patch class over the whole window.
#[derive(Clone, Debug)]
pub struct OccurrenceSet {
    pub class_rep: Patch,
    /// Centres whose patch ball fits in the window.
    pub region: Aabb,
    pub positions: Vec<Point>,
    index: PointIndex,
}

impl OccurrenceSet {
    pub fn new(x: &DeloneWindow, class_rep: &Patch) -> Result<Self, DeviationError> {
        let region = x.patch_region(class_rep.radius);
        if region.is_empty() {
            return Err(DeviationError::WindowTooSmall(format!(
                "no room for radius-{} patches",
                class_rep.radius
            )));
        }
        let positions = x.occurrences(class_rep, &region)?;
        let cell = (2.0 * class_rep.radius).max(x.r_dense).max(1e-9);
        let index = PointIndex::new(&positions, x.dim, cell);
        Ok(OccurrenceSet {
            class_rep: class_rep.clone(),
            region,
            positions,
            index,
        })
    }

    pub fn radius(&self) -> f64 {
        self.class_rep.radius
    }

    /// Occurrences with centre in `[min, max)^d`.
    pub fn count(&self, u: &Aabb) -> Result<u64, DeviationError> {
        if !self.region.contains_box(u) {
            return Err(DeviationError::BoundaryViolation {
                cube: *u,
                radius: self.radius(),
            });
        }
        Ok(self
            .in_box(u)
            .filter(|&k| u.contains_half_open(self.positions[k]))
            .count() as u64)
    }

    fn in_box(&self, b: &Aabb) -> impl Iterator<Item = usize> {
        self.index.in_box(b).into_iter()
    }

    /// Occurrences in the star set of the tile of class `class` at level `n`
    /// anchored at `anchor`.
    pub fn count_in_tile(
        &self,
        t: &TowerSystem,
        n: usize,
        class: usize,
        anchor: Point,
    ) -> Option<u64> {
        let g = &t.levels[n].geometry[class];
        let bbox = g.bbox.translate(anchor);
        if !self.region.contains_box(&bbox) {
            return None;
        }
        let count = self
            .in_box(&bbox)
            .filter(|&k| {
                let rel = self.positions[k] - anchor;
                g.pieces.iter().any(|c| star_membership(c, rel))
            })
            .count();
        Some(count as u64)
    }
}

/// `n_p(U)`: occurrences of the class of `class_rep` centred in the half-open cube `U`.
pub fn patch_count(x: &DeloneWindow, class_rep: &Patch, u: &Aabb) -> Result<u64, DeviationError> {
    if !x.window.shrink(class_rep.radius).contains_box(u) {
        return Err(DeviationError::BoundaryViolation {
            cube: *u,
            radius: class_rep.radius,
        });
    }
    let occ = x.occurrences(class_rep, u)?;
    Ok(occ.iter().filter(|p| u.contains_half_open(**p)).count() as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub patch_class: PatternClassId,
    pub freq_hat: f64,
    pub count: u64,
    pub window_used: Aabb,
}

/// Largest cube centred in `region`.
pub fn largest_cube(region: &Aabb) -> Aabb {
    let side = region.min_extent();
    let c = region.center();
    Aabb::cube(c - Point::new(side / 2.0, side / 2.0), side, region.dim)
}

/// Occurrence density over the largest cube whose patches fit in the window.
pub fn estimate_frequency(
    x: &DeloneWindow,
    class_rep: &Patch,
) -> Result<FrequencyEstimate, DeviationError> {
    let occ = OccurrenceSet::new(x, class_rep)?;
    frequency_in(&occ, &largest_cube(&occ.region), x.eps)
}

/// Occurrence density over the cube `u`.
pub fn frequency_in(
    occ: &OccurrenceSet,
    u: &Aabb,
    eps: f64,
) -> Result<FrequencyEstimate, DeviationError> {
    if u.min_extent() < 4.0 * occ.radius().max(1.0) {
        return Err(DeviationError::WindowTooSmall(format!(
            "cube side {} is not much larger than the patch radius {}",
            u.min_extent(),
            occ.radius()
        )));
    }
    let count = occ.count(u)?;
    if count == 0 {
        return Err(DeviationError::WindowTooSmall(
            "the patch does not occur in the cube".into(),
        ));
    }
    Ok(FrequencyEstimate {
        patch_class: PatternClassId {
            id: 0,
            canonical_form: canonical_form(&occ.class_rep.relative_points, eps),
        },
        freq_hat: count as f64 / u.volume(),
        count,
        window_used: *u,
    })
}

/// Smallest `n` with `k_n - R_ext(B_n) >= S`.
pub fn compute_n0(t: &TowerSystem, s: f64) -> Result<usize, DeviationError> {
    let reach = |l: &crate::towers::TowerLevel| l.k_n - l.stats.r_ext;
    t.levels
        .iter()
        .position(|l| reach(l) >= s)
        .ok_or_else(|| DeviationError::TowerTooShallow {
            s,
            best: t.levels.iter().map(reach).fold(f64::NEG_INFINITY, f64::max),
        })
}

/// A trusted class-`i` puncture of level `n` in the deepest valid region.
pub fn representative(t: &TowerSystem, n: usize, i: usize) -> Option<Point> {
    let region = t.deepest_valid_region();
    let found = t.levels[n]
        .trusted_in(&region)
        .find(|(_, p)| p.class == Some(i))
        .map(|(_, p)| p.position);
    found
}

/// `n_p(D_{n,i})` for every class of level `n`.
pub fn tile_counts(
    t: &TowerSystem,
    occ: &OccurrenceSet,
    n: usize,
) -> Result<Vec<u64>, DeviationError> {
    (0..t.levels[n].t())
        .map(|i| {
            representative(t, n, i)
                .and_then(|a| occ.count_in_tile(t, n, i, a))
                .ok_or(DeviationError::NoRepresentative { level: n, class: i })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n0: usize,
    pub n: usize,
    pub class: usize,
    /// `n_p(D_{n,i})` counted inside a class-`i` tile.
    pub direct: u64,
    /// `Σ_k n_p(D_{n0,k}) p^{(n,n0)}_{ik}`.
    pub decomposed: u64,
    pub decn_holds: bool,
    /// `n_p(D_{n,i}) - leb(D_{n,i}) freq`.
    pub dev: f64,
    /// `Σ_k n_p(D_{n0,k}) (p_ik - leb(D_{n,i}) nu(n0, k))`.
    pub dev_from_measures: f64,
    /// `|freq - Σ_k n_p(D_{n0,k}) nu(n0, k)| / freq`.
    pub dec_c_residual: f64,
    /// Boundary allowance for `dec_c_residual`.
    pub dec_c_tolerance: f64,
    pub dec_c_holds: bool,
}

/// Checks the tile-count identity and the tile-deviation formula at `(n, i)`.
pub fn deviation_identity_check(
    t: &TowerSystem,
    mu: &TransverseMeasures,
    occ: &OccurrenceSet,
    freq: &FrequencyEstimate,
    n0: usize,
    n: usize,
    i: usize,
) -> Result<IdentityReport, DeviationError> {
    if n < n0 || n >= t.levels.len() || i >= t.levels[n].t() {
        return Err(DeviationError::InvalidInput(format!(
            "(n, i) = ({n}, {i}) with n0 = {n0}"
        )));
    }
    let base = tile_counts(t, occ, n0)?;
    let anchor =
        representative(t, n, i).ok_or(DeviationError::NoRepresentative { level: n, class: i })?;
    let direct = occ
        .count_in_tile(t, n, i, anchor)
        .ok_or(DeviationError::NoRepresentative { level: n, class: i })?;
    let row: Vec<u64> = if n == n0 {
        (0..base.len()).map(|k| u64::from(k == i)).collect()
    } else {
        p_product(t, n0, n)[i].clone()
    };
    let decomposed: u64 = base.iter().zip(&row).map(|(a, b)| a * b).sum();
    let leb = t.levels[n].geometry[i].measure;
    let nu0 = mu.nu(n0);
    let via_nu: f64 = base.iter().zip(nu0).map(|(&c, v)| c as f64 * v).sum();
    let dev_from_measures: f64 = base
        .iter()
        .zip(&row)
        .zip(nu0)
        .map(|((&c, &p), v)| c as f64 * (p as f64 - leb * v))
        .sum();
    let dec_c_residual = (freq.freq_hat - via_nu).abs() / freq.freq_hat;
    let u = &freq.window_used;
    let dec_c_tolerance =
        mu.levels[n0].band + 2.0 * t.levels[n0].stats.r_ext * u.boundary_measure() / u.volume();
    Ok(IdentityReport {
        n0,
        n,
        class: i,
        direct,
        decomposed,
        decn_holds: direct == decomposed,
        dev: direct as f64 - leb * freq.freq_hat,
        dev_from_measures,
        dec_c_residual,
        dec_c_tolerance,
        dec_c_holds: dec_c_residual <= dec_c_tolerance,
    })
}

/// `max_{i,j} |p^{(n,m)}_ij / leb(D_{n,i}) - nu(m, j)| / max_j nu(m, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub m: usize,
    pub n: usize,
    pub value: f64,
    /// `value / c_T^{n-m}`.
    pub ratio: f64,
    /// Measurement floor from the measure residuals of levels `m..=n`.
    pub floor: f64,
    /// `value` does not exceed the running minimum of earlier values plus the floor.
    pub decays: bool,
}

pub fn convergence_envelope(
    t: &TowerSystem,
    mu: &TransverseMeasures,
    c_t: f64,
) -> Vec<ConvergenceEntry> {
    let levels = t.levels.len();
    let mut out = Vec::new();
    for m in 0..levels.saturating_sub(1) {
        let nu = mu.nu(m);
        let scale = nu.iter().copied().fold(0.0, f64::max);
        let mut best = f64::INFINITY;
        for n in m + 1..levels {
            let p = p_product(t, m, n);
            let value = p
                .iter()
                .zip(&t.levels[n].geometry)
                .flat_map(|(row, g)| {
                    row.iter()
                        .zip(nu)
                        .map(move |(&x, v)| (x as f64 / g.measure - v).abs())
                })
                .fold(0.0, f64::max)
                / scale;
            let floor: f64 = (m..=n)
                .map(|k| {
                    mu.levels[k].band
                        + mu.levels[k]
                            .tran_residual
                            .iter()
                            .copied()
                            .fold(0.0, f64::max)
                })
                .sum();
            let decays = value <= best + floor;
            best = best.min(value);
            out.push(ConvergenceEntry {
                m,
                n,
                value,
                ratio: value / c_t.powi((n - m) as i32),
                floor,
                decays,
            });
        }
    }
    out
}
