use super::{
    compute_n0, cube_decomposition, tile_counts, DecompositionConstants, DeviationError,
    FrequencyEstimate, OccurrenceSet, TileLocator,
};
use crate::geometry::{Aabb, Dim, Point};
use crate::towers::TowerSystem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Radical inverse of `i` in base `b`.
pub fn halton(mut i: u64, b: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    #[serde(rename = "N")]
    pub n: f64,
    pub anchor: Point,
    pub n_p: u64,
    pub dev: f64,
    pub n0: usize,
    /// Deepest level with a tile inside the cube.
    pub n1: Option<usize>,
}

/// Per-cube consistency of the tile decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeCheck {
    pub area_residual: f64,
    pub bounds_hold: bool,
    pub counts: Vec<u64>,
    /// Occurrences in selected tiles equal their class counts, and the
    /// remainder makes up the rest.
    pub occupancy_holds: bool,
    pub deviation_lhs: f64,
    pub deviation_rhs: f64,
    pub deviation_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    /// One-sided p-value for an upward trend.
    pub p_value: f64,
    pub upward_trend: bool,
}

/// Mann-Kendall trend test with tie correction; upward at the 5% level.
pub fn mann_kendall(xs: &[f64]) -> MannKendall {
    let n = xs.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut k = 0;
    while k < n {
        let mut e = k;
        while e + 1 < n && sorted[e + 1] == sorted[k] {
            e += 1;
        }
        let t = (e - k + 1) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        k = e + 1;
    }
    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if variance <= 0.0 {
        0.0
    } else if s > 0 {
        (s - 1) as f64 / variance.sqrt()
    } else if s < 0 {
        (s + 1) as f64 / variance.sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = 1.0 - normal.cdf(z);
    MannKendall {
        s,
        variance,
        z,
        p_value,
        upward_trend: p_value < 0.05,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub n_values: Vec<f64>,
    pub max_abs_dev: Vec<f64>,
    /// Least-squares slope of `log max|dev|` against `log N` (nonzero maxima only).
    pub slope: Option<f64>,
    pub d_minus_delta: f64,
    pub d_minus_one: f64,
    /// `max|dev| / N^{d - delta_T}`.
    pub ratio_series: Vec<f64>,
    /// `max|dev| / N^{d-1}`.
    pub trivial_series: Vec<f64>,
    pub ratio_trend: MannKendall,
    pub trivial_trend: MannKendall,
    /// `N`-independent bound on the trivial series from the decomposition constants.
    pub trivial_bound: f64,
    pub trivial_bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<DeviationRecord>,
    pub checks: Vec<Option<CubeCheck>>,
    pub fit: SweepFit,
    pub constants: DecompositionConstants,
    pub freq_hat: f64,
    pub n0: usize,
    pub delta_t: f64,
}

impl SweepResult {
    /// Every cube that admits a full tile passed every decomposition check.
    pub fn cubes_pass(&self) -> bool {
        self.checks.iter().flatten().all(|c| {
            c.area_residual < 1e-9 && c.bounds_hold && c.occupancy_holds && c.deviation_holds
        })
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Deviations of the patch count over `anchors_per_n` cubes of each side in
/// `n_values`, anchored on a Halton sequence in the deepest valid region.
pub fn deviation_sweep(
    t: &TowerSystem,
    occ: &OccurrenceSet,
    freq: &FrequencyEstimate,
    n_values: &[f64],
    anchors_per_n: usize,
    delta_t: f64,
) -> Result<SweepResult, DeviationError> {
    if n_values.is_empty() || anchors_per_n == 0 {
        return Err(DeviationError::InvalidInput("empty sweep".into()));
    }
    if n_values.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(DeviationError::InvalidInput(
            "cube sides must be positive".into(),
        ));
    }
    let dim = t.dim();
    let d = dim.d() as i32;
    let region = t.deepest_valid_region().intersection(&occ.region);
    let n_max = n_values.iter().copied().fold(0.0, f64::max);
    if region.is_empty() || region.min_extent() < n_max {
        return Err(DeviationError::BoundaryViolation {
            cube: Aabb::cube(region.min, n_max, dim),
            radius: occ.radius(),
        });
    }
    let consts = DecompositionConstants::from_tower(t);
    let locator = TileLocator::new(t);
    let n0 = compute_n0(t, occ.radius())?;
    let top = t.levels.len() - 1;
    let mut class_counts: Vec<Vec<u64>> = vec![Vec::new(); top + 1];
    for (n, slot) in class_counts.iter_mut().enumerate().skip(n0) {
        *slot = tile_counts(t, occ, n)?;
    }
    let f = freq.freq_hat;
    let tile_dev: Vec<f64> = (0..=top)
        .map(|n| {
            class_counts[n]
                .iter()
                .zip(&t.levels[n].geometry)
                .map(|(&c, g)| (c as f64 - g.measure * f).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let base_np = class_counts[n0].iter().copied().max().unwrap_or(0) as f64;
    let base_leb = t.levels[n0]
        .geometry
        .iter()
        .map(|g| g.measure)
        .fold(0.0, f64::max);
    let c62 = (consts.m * consts.alpha.powi(d))
        .max(consts.m * t.levels[n0].s_n.powi(1 - d) * (base_np + f * base_leb));
    let tail = |n1: usize| -> f64 {
        (n0..=n1)
            .map(|n| t.params.s(n + 1).powi(1 - d) * tile_dev[n])
            .sum()
    };
    let trivial_bound = c62 * (1.0 + tail(top));

    let jobs: Vec<(f64, Point)> = n_values
        .iter()
        .flat_map(|&side| {
            (1..=anchors_per_n as u64).map(move |k| {
                let ax = region.min.x + halton(k, 2) * (region.width() - side);
                let ay = match dim {
                    Dim::One => 0.0,
                    Dim::Two => region.min.y + halton(k, 3) * (region.height() - side),
                };
                (side, Point::new(ax, ay))
            })
        })
        .collect();
    let results: Vec<(DeviationRecord, Option<CubeCheck>)> = jobs
        .par_iter()
        .map(|&(side, anchor)| -> Result<_, DeviationError> {
            let u = Aabb::cube(anchor, side, dim);
            let n_p = occ.count(&u)?;
            let dev = n_p as f64 - u.volume() * f;
            let (n1, check) = match cube_decomposition(t, &u, n0, &consts) {
                Ok(dec) => {
                    let (in_w, in_tiles, expected) =
                        dec.occupancy(t, occ, &locator, &class_counts)?;
                    let rhs = c62 * side.powi(d - 1) * (1.0 + tail(dec.n1));
                    let check = CubeCheck {
                        area_residual: dec.area_residual,
                        bounds_hold: dec.bounds_hold(),
                        counts: dec.counts.clone(),
                        occupancy_holds: in_tiles == expected && in_w + in_tiles == n_p,
                        deviation_lhs: dev.abs(),
                        deviation_rhs: rhs,
                        deviation_holds: dev.abs() <= rhs,
                    };
                    (Some(dec.n1), Some(check))
                }
                Err(DeviationError::NoFullTile(_)) => (None, None),
                Err(e) => return Err(e),
            };
            Ok((
                DeviationRecord {
                    n: side,
                    anchor,
                    n_p,
                    dev,
                    n0,
                    n1,
                },
                check,
            ))
        })
        .collect::<Result<_, _>>()?;
    let (records, checks): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let max_abs_dev: Vec<f64> = n_values
        .iter()
        .map(|&side| {
            records
                .iter()
                .filter(|r| r.n == side)
                .map(|r| r.dev.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = n_values
        .iter()
        .zip(&max_abs_dev)
        .filter(|(_, &m)| m > 0.0)
        .map(|(n, m)| (n.ln(), m.ln()))
        .unzip();
    let d_minus_delta = d as f64 - delta_t;
    let ratio_series: Vec<f64> = n_values
        .iter()
        .zip(&max_abs_dev)
        .map(|(n, m)| m / n.powf(d_minus_delta))
        .collect();
    let trivial_series: Vec<f64> = n_values
        .iter()
        .zip(&max_abs_dev)
        .map(|(n, m)| m / n.powi(d - 1))
        .collect();
    let fit = SweepFit {
        n_values: n_values.to_vec(),
        slope: least_squares_slope(&lx, &ly),
        d_minus_delta,
        d_minus_one: (d - 1) as f64,
        ratio_trend: mann_kendall(&ratio_series),
        trivial_trend: mann_kendall(&trivial_series),
        trivial_bounded: trivial_series.iter().all(|&v| v <= trivial_bound),
        trivial_bound,
        ratio_series,
        trivial_series,
        max_abs_dev,
    };
    Ok(SweepResult {
        records,
        checks,
        fit,
        constants: consts,
        freq_hat: f,
        n0,
        delta_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_terms() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((halton(4, 3) - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn mann_kendall_detects_monotone_series() {
        let up: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mk = mann_kendall(&up);
        assert_eq!(mk.s, 190);
        assert!(mk.upward_trend);
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(!mann_kendall(&down).upward_trend);
        let flat = vec![1.0; 10];
        let mk = mann_kendall(&flat);
        assert_eq!(mk.z, 0.0);
        assert!(!mk.upward_trend);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 1.0).collect();
        assert!((least_squares_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }
}
