//! Tower systems: nested Voronoi box decompositions built on a window,
//! zoomed level by level, with their transition matrices.

mod bounds;
mod build;
mod shape;
mod verify;

pub use bounds::{
    matrix_diagnostics, theorem_constants, BoundCheck, LevelMatrixReport, MatrixReport,
    TheoremConstants,
};
pub use build::{base_decomposition, build_tower, cylinder, zoom_level, Cylinder};
pub use shape::{same_placements, Face, Placement, TileGeometry, TileShape};
pub use verify::{verify_zoom, ZoomReport};

use crate::delone::{DeloneError, GeneratorSpec, PatternClassId};
use crate::geometry::{Aabb, Dim, GeometryError, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOWER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TowerError {
    #[error("input is flagged periodic")]
    PeriodicInput,
    #[error("level {level}: punctures of class {class} have non-congruent tiles (at {at:?})")]
    CongruenceFailure {
        level: usize,
        class: usize,
        at: Point,
    },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("level {level}: hypothesis {which} fails")]
    HypothesisViolation { level: usize, which: String },
    #[error("level {0} has no trusted puncture in its valid region")]
    EmptyLevel(usize),
    #[error("window exhausted; deepest complete level is {deepest}")]
    WindowExhausted { deepest: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Delone(#[from] DeloneError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerParams {
    pub s0: f64,
    /// Scale factor between consecutive levels.
    pub k: f64,
    pub n_max: usize,
    /// Empirical linear-repetitivity constant used for the reported bounds.
    pub l_hat: f64,
    /// Require `K >= 6 L (L + 1)^2` and assert the resulting bounds.
    pub enforce_theorem_k: bool,
    /// Fail on violated zooming hypotheses instead of recording them.
    pub strict: bool,
    /// Accept inputs flagged periodic (unit tests only).
    pub allow_periodic: bool,
}

impl TowerParams {
    pub fn new(s0: f64, k: f64, n_max: usize, l_hat: f64) -> Self {
        TowerParams {
            s0,
            k,
            n_max,
            l_hat,
            enforce_theorem_k: false,
            strict: false,
            allow_periodic: false,
        }
    }

    /// `6 L (L + 1)^2`.
    pub fn theorem_k(l: f64) -> f64 {
        6.0 * l * (l + 1.0) * (l + 1.0)
    }

    pub fn validate(&self) -> Result<(), TowerError> {
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(TowerError::InvalidParams("s0 must be positive".into()));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(TowerError::InvalidParams("K must exceed 1".into()));
        }
        if self.n_max < 1 {
            return Err(TowerError::InvalidParams("n_max must be at least 1".into()));
        }
        if self.l_hat.is_nan() || self.l_hat <= 0.0 {
            return Err(TowerError::InvalidParams("L_hat must be positive".into()));
        }
        if self.enforce_theorem_k && self.k < Self::theorem_k(self.l_hat) {
            return Err(TowerError::InvalidParams(format!(
                "K = {} is below 6L(L+1)^2 = {}",
                self.k,
                Self::theorem_k(self.l_hat)
            )));
        }
        Ok(())
    }

    pub fn s(&self, n: usize) -> f64 {
        self.s0 * self.k.powi(n as i32)
    }
}

/// A point of the level's base transversal seen in the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Puncture {
    pub position: Point,
    /// Class of the `k_n`-patch, if its ball fits in the window.
    pub class: Option<usize>,
    /// Tile and all of its descendants are fully determined by the window.
    pub trusted: bool,
    /// Indices of the previous-level punctures in this tile's star set.
    pub children: Vec<u32>,
    /// Index of the next-level puncture whose tile contains this one.
    pub parent: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub r_int: f64,
    pub r_ext: f64,
    /// Upper estimate of the recognition radius (the defining patch radius `k_n`).
    pub rec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerLevel {
    pub n: usize,
    pub s_n: f64,
    pub k_n: f64,
    /// Packing and covering radii of the base transversal's return set.
    pub r_c: f64,
    pub big_r_c: f64,
    /// Class 0 is the class of the origin.
    pub classes: Vec<PatternClassId>,
    pub shapes: Vec<TileShape>,
    pub geometry: Vec<TileGeometry>,
    /// Sorted by position.
    pub punctures: Vec<Puncture>,
    /// Region where the derived tiling is fully trusted.
    pub valid_region: Aabb,
    /// Region inside which every puncture of this level is enumerated.
    pub complete_region: Aabb,
    pub stats: LevelStats,
    pub dim: Dim,
}

impl TowerLevel {
    pub fn t(&self) -> usize {
        self.classes.len()
    }

    /// Positions of the class-`i` punctures.
    pub fn punctures_of(&self, i: usize) -> Vec<Point> {
        self.punctures
            .iter()
            .filter(|p| p.class == Some(i))
            .map(|p| p.position)
            .collect()
    }

    /// Trusted punctures with position in `region`.
    pub fn trusted_in<'a>(
        &'a self,
        region: &'a Aabb,
    ) -> impl Iterator<Item = (usize, &'a Puncture)> + 'a {
        self.punctures
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.trusted && region.contains(p.position))
    }

    /// Trusted class counts in `region`.
    pub fn class_counts(&self, region: &Aabb) -> Vec<u64> {
        let mut c = vec![0u64; self.t()];
        for (_, p) in self.trusted_in(region) {
            if let Some(k) = p.class {
                c[k] += 1;
            }
        }
        c
    }

    pub fn find_puncture(&self, p: Point, tol: f64) -> Option<usize> {
        let k = self
            .punctures
            .partition_point(|q| q.position.lex_cmp(&(p - Point::new(tol, tol))).is_lt());
        self.punctures[k..]
            .iter()
            .take_while(|q| q.position.x <= p.x + tol)
            .position(|q| q.position.approx_eq(p, tol))
            .map(|j| j + k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub n: usize,
    /// `t_n x t_{n-1}` counts.
    pub entries: Vec<Vec<u64>>,
    /// `offsets[i][j]`: positions of class-`j` tiles inside the class-`i` tile.
    pub offsets: Vec<Vec<Vec<Point>>>,
}

impl TransitionMatrix {
    pub fn from_shapes(n: usize, shapes: &[TileShape], t_prev: usize) -> Self {
        let mut offsets = vec![vec![Vec::new(); t_prev]; shapes.len()];
        for (i, s) in shapes.iter().enumerate() {
            for p in s.placements() {
                offsets[i][p.class].push(p.offset);
            }
        }
        let entries = offsets
            .iter()
            .map(|row| row.iter().map(|o| o.len() as u64).collect())
            .collect();
        TransitionMatrix {
            n,
            entries,
            offsets,
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn min_entry(&self) -> u64 {
        self.entries.iter().flatten().copied().min().unwrap_or(0)
    }

    /// Maximum row sum.
    pub fn norm_inf(&self) -> u64 {
        self.entries
            .iter()
            .map(|r| r.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// Maximum column sum.
    pub fn norm_1(&self) -> u64 {
        (0..self.cols())
            .map(|j| self.entries.iter().map(|r| r[j]).sum())
            .max()
            .unwrap_or(0)
    }

    /// Integer product `self * other`.
    pub fn mul(&self, other: &TransitionMatrix) -> Vec<Vec<u64>> {
        mat_mul(&self.entries, &other.entries)
    }
}

pub fn mat_mul(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(&x, r)| x * r[j]).sum())
                .collect()
        })
        .collect()
}

/// One named inequality evaluated on a built tower.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub level: usize,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs <= rhs` (or `None` when it could not be evaluated).
    pub holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub generator: GeneratorSpec,
    pub window: Aabb,
    pub point_count: usize,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerSystem {
    pub schema_version: u32,
    pub params: TowerParams,
    pub levels: Vec<TowerLevel>,
    /// `matrices[n - 1]` links level `n` to level `n - 1`.
    pub matrices: Vec<TransitionMatrix>,
    pub ledger: Vec<LedgerEntry>,
    pub source: SourceInfo,
}

impl TowerSystem {
    pub fn dim(&self) -> Dim {
        self.source.window.dim
    }

    pub fn matrix(&self, n: usize) -> &TransitionMatrix {
        &self.matrices[n - 1]
    }

    pub fn deepest_valid_region(&self) -> Aabb {
        self.levels
            .last()
            .map(|l| l.valid_region)
            .unwrap_or(self.source.window)
    }

    pub fn ledger_for<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a LedgerEntry> + 'a {
        self.ledger.iter().filter(move |e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tower serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Ancestor at level `m` of the level-`n` puncture `i` (`m >= n`).
    pub fn ancestor(&self, n: usize, i: usize, m: usize) -> Option<usize> {
        let mut cur = i;
        for lvl in n..m {
            cur = self.levels[lvl].punctures[cur].parent? as usize;
        }
        Some(cur)
    }
}
