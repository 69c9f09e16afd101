use super::{MarkovError, MixingReport, TransverseMeasures};
use crate::geometry::{Aabb, Dim, Point, PointIndex};
use crate::towers::TowerSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLES: usize = 100_000;
const STREAMS: usize = 16;

/// Tile colors at every level for uniform points of a region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LebesgueSample {
    pub region: Aabb,
    pub seed: u64,
    /// `colors[s][n]`: level-`n` class of the tile containing sample `s`.
    pub colors: Vec<Vec<u32>>,
    /// Samples whose tile chain left the trusted part of the tower.
    pub rejected: usize,
}

impl LebesgueSample {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// Colors each sample by the level-0 Voronoi tile of its nearest base
/// puncture and the ancestors of that tile.
pub fn lebesgue_sample(
    t: &TowerSystem,
    region: &Aabb,
    samples: usize,
    seed: u64,
) -> Result<LebesgueSample, MarkovError> {
    if region.is_empty() {
        return Err(MarkovError::EmptyLevel(0));
    }
    let base = &t.levels[0];
    let pos: Vec<Point> = base.punctures.iter().map(|p| p.position).collect();
    let index = PointIndex::new(&pos, base.dim, 2.0 * base.stats.r_ext.max(1e-9));
    let top = t.levels.len();
    let per = samples / STREAMS;
    let extra = samples % STREAMS;
    let streams: Vec<(Vec<Vec<u32>>, usize)> = (0..STREAMS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = per + usize::from(k < extra);
            let mut out = Vec::with_capacity(n);
            let mut rejected = 0;
            for _ in 0..n {
                let x = region.min.x + rng.gen::<f64>() * region.width();
                let y = match region.dim {
                    Dim::One => 0.0,
                    Dim::Two => region.min.y + rng.gen::<f64>() * region.height(),
                };
                match colors_at(t, &index, Point::new(x, y), top) {
                    Some(c) => out.push(c),
                    None => rejected += 1,
                }
            }
            (out, rejected)
        })
        .collect();
    let rejected = streams.iter().map(|s| s.1).sum();
    let colors = streams.into_iter().flat_map(|s| s.0).collect();
    Ok(LebesgueSample {
        region: *region,
        seed,
        colors,
        rejected,
    })
}

fn colors_at(t: &TowerSystem, index: &PointIndex, x: Point, top: usize) -> Option<Vec<u32>> {
    let mut cur = index.nearest(x)?;
    let mut out = Vec::with_capacity(top);
    for n in 0..top {
        let p = &t.levels[n].punctures[cur];
        if !p.trusted {
            return None;
        }
        out.push(p.class? as u32);
        if n + 1 < top {
            cur = p.parent? as usize;
        }
    }
    Some(out)
}

/// Empirical `max_{i,j} |P(β_n = i | β_m = j) - P(β_n = i)|` against `c_T^{n-m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedCheck {
    pub m: usize,
    pub n: usize,
    pub empirical_gap: f64,
    /// Standard error at the entry realizing the gap.
    pub sigma: f64,
    pub bound: f64,
    /// Every entry is within `bound + 3 sigma`.
    pub holds: bool,
}

pub fn speed_check(
    t: &TowerSystem,
    mix: &MixingReport,
    sample: &LebesgueSample,
) -> Vec<SpeedCheck> {
    let levels = t.levels.len();
    let total = sample.len() as f64;
    let mut out = Vec::new();
    for m in 0..levels - 1 {
        for n in m + 1..levels {
            let (tm, tn) = (t.levels[m].t(), t.levels[n].t());
            let mut joint = vec![vec![0u64; tn]; tm];
            let mut row = vec![0u64; tm];
            let mut col = vec![0u64; tn];
            for c in &sample.colors {
                let (j, i) = (c[m] as usize, c[n] as usize);
                joint[j][i] += 1;
                row[j] += 1;
                col[i] += 1;
            }
            let bound = mix.c_t.powi((n - m) as i32);
            let (mut gap, mut sigma, mut holds) = (0.0, 0.0, true);
            for j in (0..tm).filter(|&j| row[j] > 0) {
                for i in 0..tn {
                    let cond = joint[j][i] as f64 / row[j] as f64;
                    let marg = col[i] as f64 / total;
                    let s = (marg * (1.0 - marg) * (1.0 / row[j] as f64 + 1.0 / total)).sqrt();
                    let d = (cond - marg).abs();
                    holds &= d <= bound + 3.0 * s;
                    if d > gap {
                        gap = d;
                        sigma = s;
                    }
                }
            }
            out.push(SpeedCheck {
                m,
                n,
                empirical_gap: gap,
                sigma,
                bound,
                holds,
            });
        }
    }
    out
}

/// Lebesgue frequency of a nested address against
/// `(Π m^{(k+1)}_{i_{k+1}, i_k}) leb(D_{m, i_m}) nu(n, i_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddressCheck {
    pub m: usize,
    pub n: usize,
    /// `address[k - m] = i_k`.
    pub address: Vec<usize>,
    pub empirical: f64,
    pub predicted: f64,
    pub sigma: f64,
    pub holds: bool,
}

/// `count` address sequences drawn from `seed`, each spanning at least two levels.
pub fn address_check(
    t: &TowerSystem,
    mu: &TransverseMeasures,
    sample: &LebesgueSample,
    count: usize,
    seed: u64,
) -> Vec<AddressCheck> {
    let levels = t.levels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = sample.len() as f64;
    (0..count)
        .map(|_| {
            let m = rng.gen_range(0..levels - 1);
            let n = rng.gen_range(m + 1..levels);
            let address: Vec<usize> = (m..=n).map(|k| rng.gen_range(0..t.levels[k].t())).collect();
            let hits = sample
                .colors
                .iter()
                .filter(|c| (m..=n).all(|k| c[k] as usize == address[k - m]))
                .count();
            let prod: f64 = (m..n)
                .map(|k| t.matrix(k + 1).entries[address[k + 1 - m]][address[k - m]] as f64)
                .product();
            let predicted =
                prod * t.levels[m].geometry[address[0]].measure * mu.nu(n)[address[n - m]];
            let empirical = hits as f64 / total;
            let sigma = (predicted * (1.0 - predicted) / total).max(0.0).sqrt();
            AddressCheck {
                m,
                n,
                holds: (empirical - predicted).abs() <= 3.0 * sigma,
                address,
                empirical,
                predicted,
                sigma,
            }
        })
        .collect()
}
