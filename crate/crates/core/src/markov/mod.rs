//! The non-stationary Markov chain induced by a tower: empirical transverse
//! measures, the stochastic matrices `Q_n`, their products and contraction
//! coefficients, and Lebesgue-sampling checks of the chain's laws.

mod sample;

pub use sample::{
    address_check, lebesgue_sample, speed_check, AddressCheck, LebesgueSample, SpeedCheck,
    DEFAULT_SAMPLES,
};

use crate::geometry::{Aabb, Dim};
use crate::towers::{mat_mul, TowerSystem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("level {0} has no punctures in the measurement region")]
    EmptyLevel(usize),
    #[error("level {level}: class {class} has zero estimated measure")]
    ZeroMeasureClass { level: usize, class: usize },
    #[error("levels {m}..{n} out of range for a tower with {levels} levels")]
    IndexOutOfRange { m: usize, n: usize, levels: usize },
    #[error("transition matrix M_{0} has a zero entry")]
    NonPositiveMatrix(usize),
    #[error("tower has {levels} levels, {needed} needed")]
    TooShallow { levels: usize, needed: usize },
}

/// Occurrence densities of one level's classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseMeasureEstimate {
    pub level: usize,
    pub counts: Vec<u64>,
    pub nu_hat: Vec<f64>,
    /// `|Σ_i leb(D_i) nu_hat(i) - 1|`.
    pub meas_residual: f64,
    /// Area fraction of the tiles that cross the region boundary.
    pub band: f64,
    /// Per previous-level class `j`: `|nu(n-1, j) - Σ_i nu(n, i) m_ij| / nu(n-1, j)`.
    pub tran_residual: Vec<f64>,
    /// Per `j`: density of previous-level class-`j` tiles within `2 R_ext(B_n)`
    /// of the boundary, relative to `nu(n-1, j)`.
    pub tran_tolerance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseMeasures {
    /// Common region in which every level is counted.
    pub region: Aabb,
    pub levels: Vec<TransverseMeasureEstimate>,
}

impl TransverseMeasures {
    pub fn nu(&self, n: usize) -> &[f64] {
        &self.levels[n].nu_hat
    }
}

/// Punctures within `w` of the region boundary, on either side.
fn in_band(region: &Aabb, w: f64, p: crate::geometry::Point) -> bool {
    region.shrink(-w).contains(p) && !region.shrink(w).contains(p)
}

/// Densities of trusted punctures per class in the deepest valid region.
pub fn transverse_measures(t: &TowerSystem) -> Result<TransverseMeasures, MarkovError> {
    let region = t.deepest_valid_region();
    let vol = region.volume();
    if region.is_empty() || vol.is_nan() || vol <= 0.0 {
        return Err(MarkovError::EmptyLevel(t.levels.len().saturating_sub(1)));
    }
    let mut levels: Vec<TransverseMeasureEstimate> = Vec::with_capacity(t.levels.len());
    for (n, lv) in t.levels.iter().enumerate() {
        let counts = lv.class_counts(&region);
        if counts.iter().all(|&c| c == 0) {
            return Err(MarkovError::EmptyLevel(n));
        }
        let nu_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / vol).collect();
        let covered: f64 = nu_hat
            .iter()
            .zip(&lv.geometry)
            .map(|(v, g)| v * g.measure)
            .sum();
        let r_ext = lv.stats.r_ext;
        let band: f64 = lv
            .punctures
            .iter()
            .filter(|p| in_band(&region, r_ext, p.position))
            .filter_map(|p| p.class.map(|c| lv.geometry[c].measure))
            .sum::<f64>()
            / vol;
        let (tran_residual, tran_tolerance) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let prev = &t.levels[n - 1];
            let prev_nu = &levels[n - 1].nu_hat;
            let m = t.matrix(n);
            let w = 2.0 * r_ext;
            let mut near = vec![0u64; prev.t()];
            for p in prev
                .punctures
                .iter()
                .filter(|p| in_band(&region, w, p.position))
            {
                if let Some(c) = p.class {
                    near[c] += 1;
                }
            }
            (0..prev.t())
                .map(|j| {
                    let lhs = prev_nu[j];
                    let rhs: f64 = (0..lv.t())
                        .map(|i| nu_hat[i] * m.entries[i][j] as f64)
                        .sum();
                    let tol = near[j] as f64 / vol / lhs;
                    ((lhs - rhs).abs() / lhs, tol)
                })
                .unzip()
        };
        levels.push(TransverseMeasureEstimate {
            level: n,
            counts,
            nu_hat,
            meas_residual: (covered - 1.0).abs(),
            band,
            tran_residual,
            tran_tolerance,
        });
    }
    Ok(TransverseMeasures { region, levels })
}

/// Row-stochastic matrix with rows indexed by level-`from` classes and
/// columns by level-`level` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    pub from: usize,
    pub level: usize,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub entries: Vec<Vec<f64>>,
    /// Row sums before renormalization.
    pub raw_row_sums: Vec<f64>,
    /// `max_j |raw_row_sum_j - 1|`.
    pub renorm_residual: f64,
}

impl StochasticMatrix {
    fn new(from: usize, level: usize, raw: Vec<Vec<f64>>) -> Self {
        let raw_row_sums: Vec<f64> = raw.iter().map(|r| r.iter().sum()).collect();
        let renorm_residual = raw_row_sums
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        let entries = raw
            .iter()
            .zip(&raw_row_sums)
            .map(|(r, s)| r.iter().map(|v| v / s).collect())
            .collect();
        StochasticMatrix {
            from,
            level,
            row_labels: (0..raw.len()).collect(),
            col_labels: (0..raw.first().map_or(0, Vec::len)).collect(),
            entries,
            raw_row_sums,
            renorm_residual,
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `1 - min entry`.
    pub fn contraction(&self) -> f64 {
        1.0 - self.min_entry()
    }

    /// `max_{i,j,s} |q_is - q_js|`.
    pub fn row_variation(&self) -> f64 {
        let cols = self.col_labels.len();
        (0..cols)
            .map(|s| {
                let (lo, hi) = self
                    .entries
                    .iter()
                    .map(|r| r[s])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                        (a.min(v), b.max(v))
                    });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of a row sum from 1 after renormalization.
    pub fn stochastic_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn mat_mul_f64(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, r)| x * r[j]).sum())
                .collect()
        })
        .collect()
}

/// `q_ji = nu(n, i) / nu(n-1, j) m_ij`, rows renormalized.
pub fn q_matrix(
    t: &TowerSystem,
    mu: &TransverseMeasures,
    n: usize,
) -> Result<StochasticMatrix, MarkovError> {
    if n == 0 || n >= t.levels.len() {
        return Err(MarkovError::IndexOutOfRange {
            m: n.saturating_sub(1),
            n,
            levels: t.levels.len(),
        });
    }
    let (prev, cur) = (mu.nu(n - 1), mu.nu(n));
    let m = t.matrix(n);
    let mut raw = vec![vec![0.0; cur.len()]; prev.len()];
    for (j, row) in raw.iter_mut().enumerate() {
        if prev[j].is_nan() || prev[j] <= 0.0 {
            return Err(MarkovError::ZeroMeasureClass {
                level: n - 1,
                class: j,
            });
        }
        for (i, v) in row.iter_mut().enumerate() {
            *v = cur[i] / prev[j] * m.entries[i][j] as f64;
        }
        if row.iter().sum::<f64>() <= 0.0 {
            return Err(MarkovError::ZeroMeasureClass {
                level: n - 1,
                class: j,
            });
        }
    }
    Ok(StochasticMatrix::new(n - 1, n, raw))
}

/// Integer product `P(n, m) = M_n ... M_{m+1}` (`t_n x t_m`).
pub fn p_product(t: &TowerSystem, m: usize, n: usize) -> Vec<Vec<u64>> {
    let mut p = t.matrix(n).entries.clone();
    for k in (m + 1..n).rev() {
        p = mat_mul(&p, &t.matrix(k).entries);
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainProduct {
    /// `Q(n, m) = Q_{m+1} ... Q_n`.
    pub q: StochasticMatrix,
    /// `P(n, m) = M_n ... M_{m+1}`.
    pub p: Vec<Vec<u64>>,
    /// `max_{j,i} |q_ji - nu(n, i) / nu(m, j) p_ij|`.
    pub qnm_residual: f64,
}

pub fn chain_product(
    t: &TowerSystem,
    mu: &TransverseMeasures,
    m: usize,
    n: usize,
) -> Result<ChainProduct, MarkovError> {
    if m >= n || n >= t.levels.len() {
        return Err(MarkovError::IndexOutOfRange {
            m,
            n,
            levels: t.levels.len(),
        });
    }
    let mut q = q_matrix(t, mu, m + 1)?;
    for k in m + 2..=n {
        let next = q_matrix(t, mu, k)?;
        q.entries = mat_mul_f64(&q.entries, &next.entries);
        q.level = k;
        q.col_labels = next.col_labels;
        q.raw_row_sums = q.entries.iter().map(|r| r.iter().sum()).collect();
        q.renorm_residual = q
            .raw_row_sums
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
    }
    let p = p_product(t, m, n);
    let (num, den) = (mu.nu(n), mu.nu(m));
    let mut qnm_residual: f64 = 0.0;
    for (j, row) in q.entries.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let formula = num[i] / den[j] * p[i][j] as f64;
            qnm_residual = qnm_residual.max((v - formula).abs());
        }
    }
    Ok(ChainProduct { q, p, qnm_residual })
}

/// `c_T` from the column-sum norms `||M_n||_1`, in the form whose supremum
/// bounds every `c(Q_n)` and in the literal supremum form.
pub fn c_t_from_norms(norm_1: &[u64]) -> Option<(f64, f64)> {
    let prods: Vec<f64> = norm_1.windows(2).map(|w| (w[0] * w[1]) as f64).collect();
    let hi = prods.iter().copied().fold(f64::NAN, f64::max);
    let lo = prods.iter().copied().fold(f64::NAN, f64::min);
    (!prods.is_empty()).then(|| (1.0 - 1.0 / hi, 1.0 - 1.0 / lo))
}

/// `-log_K c`.
pub fn delta_from(c: f64, k: f64) -> f64 {
    -c.ln() / k.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelContraction {
    pub n: usize,
    pub c_q: f64,
    /// `1 - ||M_n||_1^{-1} ||M_{n+1}||_1^{-1}`, when `M_{n+1}` exists.
    pub bound: Option<f64>,
    pub holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub m: usize,
    pub n: usize,
    /// `max_{i,j,s} |q^{(n,m)}_is - q^{(n,m)}_js|`.
    pub gap: f64,
    /// `max_{j,i} |q^{(n,m)}_ji - leb(D_{n,i}) nu(n, i)|`.
    pub marginal_gap: f64,
    /// `c_T^{n-m}`.
    pub bound: f64,
    /// `(max_k c(Q_k))^{n-m}`.
    pub contraction_bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeaBoxEntry {
    pub n: usize,
    pub class: usize,
    /// `leb(D_{n,i}) nu(n, i)`.
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub levels: Vec<LevelContraction>,
    #[serde(rename = "c_Q")]
    pub c_q: Vec<f64>,
    #[serde(rename = "c_T")]
    pub c_t: f64,
    /// The supremum-form constant, recorded alongside.
    #[serde(rename = "c_T_sup_form")]
    pub c_t_sup_form: f64,
    /// Undefined when `c_T = 0` (every matrix is all ones).
    #[serde(rename = "delta_T")]
    pub delta_t: Option<f64>,
    pub gaps: Vec<GapEntry>,
    /// `M = sup_n ||M_n||_inf ||M_{n+1}||_inf`.
    pub mea_box_m: f64,
    pub mea_box: Vec<MeaBoxEntry>,
    pub matrices: Vec<StochasticMatrix>,
    pub max_renorm_residual: f64,
    pub note: Option<String>,
}

pub fn mixing_analysis(
    t: &TowerSystem,
    mu: &TransverseMeasures,
) -> Result<MixingReport, MarkovError> {
    let levels = t.levels.len();
    if levels < 3 {
        return Err(MarkovError::TooShallow { levels, needed: 3 });
    }
    if let Some(m) = t.matrices.iter().find(|m| m.min_entry() == 0) {
        return Err(MarkovError::NonPositiveMatrix(m.n));
    }
    let qs: Vec<StochasticMatrix> = (1..levels)
        .map(|n| q_matrix(t, mu, n))
        .collect::<Result<_, _>>()?;
    let norm_1: Vec<u64> = t.matrices.iter().map(|m| m.norm_1()).collect();
    let (c_t, c_t_sup_form) = c_t_from_norms(&norm_1).expect("at least two matrices");
    let contraction: Vec<LevelContraction> = qs
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let bound = norm_1
                .get(k + 1)
                .map(|&b| 1.0 - 1.0 / (norm_1[k] * b) as f64);
            LevelContraction {
                n: k + 1,
                c_q: q.contraction(),
                bound,
                holds: bound.map(|b| q.contraction() <= b + 1e-12),
            }
        })
        .collect();
    let c_max = contraction.iter().map(|l| l.c_q).fold(0.0, f64::max);
    let mut gaps = Vec::new();
    for m in 0..levels - 1 {
        for n in m + 1..levels {
            let prod = chain_product(t, mu, m, n)?;
            let marg: Vec<f64> = mu
                .nu(n)
                .iter()
                .zip(&t.levels[n].geometry)
                .map(|(v, g)| v * g.measure)
                .collect();
            let marginal_gap = prod
                .q
                .entries
                .iter()
                .flat_map(|r| r.iter().zip(&marg).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let gap = prod.q.row_variation();
            let bound = c_t.powi((n - m) as i32);
            gaps.push(GapEntry {
                m,
                n,
                gap,
                marginal_gap,
                bound,
                contraction_bound: c_max.powi((n - m) as i32),
                holds: gap <= bound + 1e-12,
            });
        }
    }
    let norm_inf: Vec<u64> = t.matrices.iter().map(|m| m.norm_inf()).collect();
    let mea_box_m = norm_inf
        .windows(2)
        .map(|w| (w[0] * w[1]) as f64)
        .fold(0.0, f64::max);
    let mut mea_box = Vec::new();
    for (n, lv) in t.levels.iter().enumerate() {
        for (i, (v, g)) in mu.nu(n).iter().zip(&lv.geometry).enumerate() {
            let value = v * g.measure;
            mea_box.push(MeaBoxEntry {
                n,
                class: i,
                value,
                bound: 1.0 / mea_box_m,
                holds: value >= 1.0 / mea_box_m,
            });
        }
    }
    let note = if c_t <= 0.0 {
        Some("degenerate tower: c_T = 0 and delta_T is undefined".to_string())
    } else if c_t_sup_form != c_t {
        Some(format!(
            "supremum-form constant {c_t_sup_form} is smaller than the per-level bound {c_t}; c_T uses the latter"
        ))
    } else {
        None
    };
    Ok(MixingReport {
        c_q: contraction.iter().map(|l| l.c_q).collect(),
        levels: contraction,
        c_t,
        c_t_sup_form,
        delta_t: (c_t > 0.0).then(|| delta_from(c_t, t.params.k)),
        gaps,
        mea_box_m,
        mea_box,
        max_renorm_residual: qs.iter().map(|q| q.renorm_residual).fold(0.0, f64::max),
        matrices: qs,
        note,
    })
}

/// Exact area fraction of each level-`n` color inside the measurement
/// region, against `leb(D_{n,i}) nu(n, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub n: usize,
    pub class: usize,
    pub area_fraction: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub fn marginal_consistency(t: &TowerSystem, mu: &TransverseMeasures) -> Vec<MarginalCheck> {
    let region = mu.region;
    let vol = region.volume();
    let mut out = Vec::new();
    for (n, lv) in t.levels.iter().enumerate() {
        let mut area = vec![0.0; lv.t()];
        let reach = region.shrink(-lv.stats.r_ext);
        let inner = region.shrink(lv.stats.r_ext);
        for p in lv.punctures.iter().filter(|p| reach.contains(p.position)) {
            let Some(c) = p.class else { continue };
            let g = &lv.geometry[c];
            if inner.contains(p.position) {
                area[c] += g.measure;
                continue;
            }
            let local = region.translate(-p.position);
            area[c] += match t.dim() {
                Dim::One => g
                    .pieces
                    .iter()
                    .map(|c| (c.hi().min(local.max.x) - c.lo().max(local.min.x)).max(0.0))
                    .sum::<f64>(),
                Dim::Two => g
                    .pieces
                    .iter()
                    .filter_map(|c| c.clip_to_box(&local, 0.0))
                    .map(|c| c.measure())
                    .sum::<f64>(),
            };
        }
        let est = &mu.levels[n];
        for (i, g) in lv.geometry.iter().enumerate() {
            let area_fraction = area[i] / vol;
            let predicted = est.nu_hat[i] * g.measure;
            out.push(MarginalCheck {
                n,
                class: i,
                area_fraction,
                predicted,
                tolerance: est.band,
                holds: (area_fraction - predicted).abs() <= est.band,
            });
        }
    }
    out
}
