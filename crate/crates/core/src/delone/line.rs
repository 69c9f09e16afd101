//! Linear-time patch keys for point sets on the line.
//!
//! Gaps between consecutive points are clustered into symbols; the S-patch
//! centred at a point is then determined by how many points it has on each
//! side together with the symbol word in between, which a pair of rolling
//! polynomial hashes identifies in O(1).

use crate::geometry::Point;

const MOD: u64 = (1 << 61) - 1;
const BASES: [u64; 2] = [1_000_003, 2_305_843_009_213_693_921 / 7 + 12_345];

fn mul_mod(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    let lo = (p as u64 & MOD) + (p >> 61) as u64;
    if lo >= MOD {
        lo - MOD
    } else {
        lo
    }
}

fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MOD {
        s - MOD
    } else {
        s
    }
}

fn sub_mod(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + MOD - b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct LineKey {
    /// Points strictly left of the centre.
    pub left: u32,
    pub count: u32,
    pub hash: (u64, u64),
}

#[derive(Clone, Debug)]
pub(crate) struct GapIndex {
    xs: Vec<f64>,
    /// Ascending representative length of each symbol.
    values: Vec<f64>,
    tol: f64,
    prefix: [Vec<u64>; 2],
    powers: [Vec<u64>; 2],
}

impl GapIndex {
    /// `xs` must be sorted ascending.
    pub fn new(xs: &[f64], tol: f64) -> Self {
        let gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut order: Vec<usize> = (0..gaps.len()).collect();
        order.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]));
        let mut symbols = vec![0u32; gaps.len()];
        let mut values: Vec<f64> = Vec::new();
        let mut start = f64::NEG_INFINITY;
        for &i in &order {
            if gaps[i] - start > tol {
                start = gaps[i];
                values.push(start);
            }
            symbols[i] = (values.len() - 1) as u32;
        }
        let n = gaps.len();
        let mut prefix = [vec![0u64; n + 1], vec![0u64; n + 1]];
        let mut powers = [vec![1u64; n + 1], vec![1u64; n + 1]];
        for h in 0..2 {
            for i in 0..n {
                prefix[h][i + 1] = add_mod(mul_mod(prefix[h][i], BASES[h]), symbols[i] as u64 + 1);
                powers[h][i + 1] = mul_mod(powers[h][i], BASES[h]);
            }
        }
        GapIndex {
            xs: xs.to_vec(),
            values,
            tol,
            prefix,
            powers,
        }
    }

    #[cfg(test)]
    pub fn symbol_count(&self) -> usize {
        self.values.len()
    }

    fn range_hash(&self, l: usize, r: usize) -> (u64, u64) {
        let f = |h: usize| {
            sub_mod(
                self.prefix[h][r],
                mul_mod(self.prefix[h][l], self.powers[h][r - l]),
            )
        };
        (f(0), f(1))
    }

    /// Key of the closed `(s + eps)`-patch centred at sorted position `i`.
    pub fn key_at(&self, i: usize, s: f64, eps: f64) -> LineKey {
        let c = self.xs[i];
        let l = self.xs[..i].partition_point(|&x| x < c - s - eps);
        let r = i + self.xs[i..].partition_point(|&x| x <= c + s + eps);
        LineKey {
            left: (i - l) as u32,
            count: (r - l) as u32,
            hash: self.range_hash(l, r - 1),
        }
    }

    fn symbol_of(&self, g: f64) -> Option<u32> {
        let k = self.values.partition_point(|&v| v < g);
        [k.wrapping_sub(1), k]
            .into_iter()
            .filter(|&j| j < self.values.len())
            .filter(|&j| (self.values[j] - g).abs() <= 3.0 * self.tol)
            .min_by(|&a, &b| {
                (self.values[a] - g)
                    .abs()
                    .total_cmp(&(self.values[b] - g).abs())
            })
            .map(|j| j as u32)
    }

    /// Key of an arbitrary patch, or `None` if it uses a gap length that
    /// never occurs in the indexed set (so it cannot occur either).
    pub fn key_of(&self, relative: &[Point], eps: f64) -> Option<LineKey> {
        let mut xs: Vec<f64> = relative.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        let left = xs.partition_point(|&x| x < -eps);
        if left >= xs.len() || xs[left].abs() > eps {
            return None;
        }
        let mut h = [0u64; 2];
        for w in xs.windows(2) {
            let s = self.symbol_of(w[1] - w[0])? as u64 + 1;
            for (k, hk) in h.iter_mut().enumerate() {
                *hk = add_mod(mul_mod(*hk, BASES[k]), s);
            }
        }
        Some(LineKey {
            left: left as u32,
            count: xs.len() as u32,
            hash: (h[0], h[1]),
        })
    }
}
