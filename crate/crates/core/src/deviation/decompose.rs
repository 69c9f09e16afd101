use super::{DeviationError, OccurrenceSet};
use crate::geometry::{Aabb, Dim, Point, PointIndex};
use crate::towers::{theorem_constants, TileGeometry, TowerLevel, TowerSystem};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Constants of the boundary-tile bound, taken from the tower's measured
/// radii (`K_1 s_n <= r_int(B_n)`, `R_ext(B_n) <= K_2 s_n`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConstants {
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub d: usize,
    /// Largest number of tiles forming one tile of the next level.
    pub alpha: f64,
    /// `2 d K_2 (K_1^d leb(B_1))^{-1} K (2 K_2 / K_1 + 1)^{d-1}`.
    pub m: f64,
    /// The same constant with `K_1, K_2` from `L_hat` and `K`, when `K_1 > 0`.
    pub theorem_m: Option<f64>,
}

fn cube_count_m(k1: f64, k2: f64, k: f64, dim: Dim) -> f64 {
    let d = dim.d() as i32;
    2.0 * d as f64 * k2 / (k1.powi(d) * dim.unit_ball_volume())
        * k
        * (2.0 * k2 / k1 + 1.0).powi(d - 1)
}

impl DecompositionConstants {
    pub fn from_tower(t: &TowerSystem) -> Self {
        let dim = t.dim();
        let k1 = t
            .levels
            .iter()
            .map(|l| l.stats.r_int / l.s_n)
            .fold(f64::INFINITY, f64::min);
        let k2 = t
            .levels
            .iter()
            .map(|l| l.stats.r_ext / l.s_n)
            .fold(0.0, f64::max);
        let k = t.params.k;
        let alpha = t.matrices.iter().map(|m| m.norm_inf()).max().unwrap_or(1) as f64;
        let th = theorem_constants(t.params.l_hat, k);
        DecompositionConstants {
            k1,
            k2,
            k,
            d: dim.d(),
            alpha,
            m: cube_count_m(k1, k2, k, dim),
            theorem_m: (th.k1 > 0.0).then(|| cube_count_m(th.k1, th.k2, k, dim)),
        }
    }
}

/// Finds the tiles containing arbitrary points through the base level.
#[derive(Clone, Debug)]
pub struct TileLocator {
    index: PointIndex,
}

impl TileLocator {
    pub fn new(t: &TowerSystem) -> Self {
        let base = &t.levels[0];
        let pos: Vec<Point> = base.punctures.iter().map(|p| p.position).collect();
        TileLocator {
            index: PointIndex::new(&pos, base.dim, 2.0 * base.stats.r_ext.max(1e-9)),
        }
    }

    /// Index of the level-0 tile containing `y`.
    pub fn base_tile(&self, y: Point) -> Option<usize> {
        self.index.nearest(y)
    }
}

/// Ancestor indices of a level-0 puncture at levels `0..=top`.
fn chain(t: &TowerSystem, k: usize, top: usize) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(top + 1);
    let mut cur = Some(k);
    for lvl in 0..=top {
        out.push(cur);
        cur = cur.and_then(|c| t.levels[lvl].punctures[c].parent.map(|p| p as usize));
    }
    out
}

/// Punctures whose position lies in `b`.
fn punctures_in(lv: &TowerLevel, b: &Aabb) -> Vec<usize> {
    let lo = lv.punctures.partition_point(|p| p.position.x < b.min.x);
    lv.punctures[lo..]
        .iter()
        .take_while(|p| p.position.x <= b.max.x)
        .enumerate()
        .filter(|(_, p)| b.contains(p.position))
        .map(|(k, _)| k + lo)
        .collect()
}

/// `leb((tile + anchor) ∩ u)`.
pub(crate) fn area_in(g: &TileGeometry, anchor: Point, u: &Aabb) -> f64 {
    let local = u.translate(-anchor);
    match u.dim {
        Dim::One => g
            .pieces
            .iter()
            .map(|c| (c.hi().min(local.max.x) - c.lo().max(local.min.x)).max(0.0))
            .sum(),
        Dim::Two => g
            .pieces
            .iter()
            .filter_map(|c| c.clip_to_box(&local, 0.0))
            .map(|c| c.measure())
            .sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCount {
    pub n: usize,
    pub count: u64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDecomposition {
    pub cube: Aabb,
    pub n0: usize,
    pub n1: usize,
    /// `tiles[n - n0]`: punctures of the selected level-`n` tiles.
    pub tiles: Vec<Vec<u32>>,
    pub counts: Vec<u64>,
    pub tile_area: f64,
    /// Area of the remainder, summed over uncovered base tiles.
    pub w_area: f64,
    /// `|vol(U) - vol(W) - Σ vol(T)| / vol(U)`.
    pub area_residual: f64,
    /// `#P_n <= M alpha^d N^{d-1} s_{n+1}^{1-d}`, for levels below the top of the tower.
    pub selected_bounds: Vec<BoundCount>,
    /// Tiles crossing the cube boundary against `M N^{d-1} s_n^{1-d}`.
    pub boundary_bounds: Vec<BoundCount>,
    /// `K_1 s_{n1}` against the side `N`.
    pub cotan1: (f64, f64),
}

impl CubeDecomposition {
    pub fn bounds_hold(&self) -> bool {
        self.selected_bounds.iter().all(|b| b.holds)
            && self.boundary_bounds.iter().all(|b| b.holds)
            && self.cotan1.0 <= self.cotan1.1
    }

    /// Whether `(n, k)` is a selected tile or lies inside one.
    fn covered(&self, t: &TowerSystem, sel: &[HashSet<u32>], k0: usize) -> bool {
        chain(t, k0, self.n1)
            .iter()
            .enumerate()
            .skip(self.n0)
            .any(|(lvl, c)| c.is_some_and(|c| sel[lvl - self.n0].contains(&(c as u32))))
    }

    fn selected_sets(&self) -> Vec<HashSet<u32>> {
        self.tiles
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }

    /// Occurrence counts: `(n_p(W), Σ_T n_p(T) counted directly, Σ_T n_p(D_{n,class(T)}))`.
    pub fn occupancy(
        &self,
        t: &TowerSystem,
        occ: &OccurrenceSet,
        locator: &TileLocator,
        class_counts: &[Vec<u64>],
    ) -> Result<(u64, u64, u64), DeviationError> {
        let sel = self.selected_sets();
        let (mut in_w, mut in_tiles) = (0u64, 0u64);
        for &k in &occ.index.in_box(&self.cube) {
            let y = occ.positions[k];
            if !self.cube.contains_half_open(y) {
                continue;
            }
            let b = locator
                .base_tile(y)
                .ok_or_else(|| DeviationError::InvalidInput("empty base level".into()))?;
            if self.covered(t, &sel, b) {
                in_tiles += 1;
            } else {
                in_w += 1;
            }
        }
        let expected: u64 = self
            .tiles
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let n = self.n0 + k;
                v.iter()
                    .map(|&p| {
                        class_counts[n][t.levels[n].punctures[p as usize].class.expect("trusted")]
                    })
                    .sum::<u64>()
            })
            .sum();
        Ok((in_w, in_tiles, expected))
    }
}

/// Greedy top-down selection of whole tiles inside `u`, from the deepest
/// level having a tile inside `u` down to `n0`.
pub fn cube_decomposition(
    t: &TowerSystem,
    u: &Aabb,
    n0: usize,
    consts: &DecompositionConstants,
) -> Result<CubeDecomposition, DeviationError> {
    let top = t.levels.len() - 1;
    if n0 > top {
        return Err(DeviationError::InvalidInput(format!(
            "n0 = {n0} exceeds the tower depth"
        )));
    }
    if !t.levels[n0].valid_region.contains_box(u) {
        return Err(DeviationError::OutsideValidRegion(n0));
    }
    let scale = [u.min.x, u.min.y, u.max.x, u.max.y]
        .iter()
        .fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale;
    let loose = u.shrink(-tol);
    let side = u.min_extent();
    let dm1 = consts.d as i32 - 1;
    let fitting: Vec<Vec<usize>> = (n0..=top)
        .map(|n| {
            let lv = &t.levels[n];
            punctures_in(lv, &u.shrink(-lv.stats.r_ext))
                .into_iter()
                .filter(|&k| {
                    let p = &lv.punctures[k];
                    p.trusted
                        && p.class.is_some_and(|c| {
                            loose.contains_box(&lv.geometry[c].bbox.translate(p.position))
                        })
                })
                .collect()
        })
        .collect();
    let n1 = (n0..=top)
        .rev()
        .find(|&n| !fitting[n - n0].is_empty())
        .ok_or(DeviationError::NoFullTile(n0))?;
    let mut dec = CubeDecomposition {
        cube: *u,
        n0,
        n1,
        tiles: vec![Vec::new(); n1 - n0 + 1],
        counts: Vec::new(),
        tile_area: 0.0,
        w_area: 0.0,
        area_residual: 0.0,
        selected_bounds: Vec::new(),
        boundary_bounds: Vec::new(),
        cotan1: (consts.k1 * t.levels[n1].s_n, side),
    };
    let mut sel: Vec<HashSet<u32>> = vec![HashSet::new(); n1 - n0 + 1];
    for n in (n0..=n1).rev() {
        for &k in &fitting[n - n0] {
            let mut cur = t.levels[n].punctures[k].parent;
            let mut inside = false;
            for lvl in n + 1..=n1 {
                let Some(c) = cur else { break };
                if sel[lvl - n0].contains(&c) {
                    inside = true;
                    break;
                }
                cur = t.levels[lvl].punctures[c as usize].parent;
            }
            if !inside {
                sel[n - n0].insert(k as u32);
                dec.tiles[n - n0].push(k as u32);
            }
        }
    }
    dec.counts = dec.tiles.iter().map(|v| v.len() as u64).collect();
    dec.tile_area = dec
        .tiles
        .iter()
        .enumerate()
        .flat_map(|(k, v)| {
            let lv = &t.levels[n0 + k];
            v.iter().map(move |&p| {
                lv.geometry[lv.punctures[p as usize].class.expect("trusted")].measure
            })
        })
        .sum();
    let base = &t.levels[0];
    for k in punctures_in(base, &u.shrink(-base.stats.r_ext)) {
        if dec.covered(t, &sel, k) {
            continue;
        }
        let p = &base.punctures[k];
        if let Some(c) = p.class {
            dec.w_area += area_in(&base.geometry[c], p.position, u);
        }
    }
    let vol = u.volume();
    dec.area_residual = (vol - dec.w_area - dec.tile_area).abs() / vol;
    for n in (n0..=n1).filter(|&n| n < top) {
        let s_next = t.params.s(n + 1);
        let bound =
            consts.m * consts.alpha.powi(consts.d as i32) * side.powi(dm1) * s_next.powi(-dm1);
        let count = dec.counts[n - n0];
        dec.selected_bounds.push(BoundCount {
            n,
            count,
            bound,
            holds: count as f64 <= bound,
        });
    }
    for n in n0..=(n1 + 1).min(top) {
        let lv = &t.levels[n];
        let count = punctures_in(lv, &u.shrink(-lv.stats.r_ext))
            .into_iter()
            .filter(|&k| {
                let p = &lv.punctures[k];
                p.class.is_some_and(|c| {
                    let g = &lv.geometry[c];
                    !loose.contains_box(&g.bbox.translate(p.position))
                        && area_in(g, p.position, u) > tol
                })
            })
            .count() as u64;
        let bound = consts.m * side.powi(dm1) * lv.s_n.powi(-dm1);
        dec.boundary_bounds.push(BoundCount {
            n,
            count,
            bound,
            holds: count as f64 <= bound,
        });
    }
    Ok(dec)
}
