//! Concrete linearly repetitive point sets: primitive substitutions on the
//! line, lattices, and products of two one-dimensional sets.

use super::DeloneError;
use crate::geometry::{Aabb, Dim, Point};
use serde::{Deserialize, Serialize};

pub const PHI: f64 = 1.618_033_988_749_895;

/// Upper bound on generated word length per side.
const MAX_WORD: usize = 1 << 27;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterRule {
    pub symbol: char,
    pub image: String,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `a -> ab, b -> a` with tile lengths `phi` and `1`.
    Fibonacci1d,
    Substitution1d {
        letters: Vec<LetterRule>,
    },
    Lattice {
        dim: usize,
    },
    Product2d {
        x: Box<GeneratorSpec>,
        y: Box<GeneratorSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Minimum number of substitution iterations.
    pub depth: u32,
}

impl GeneratorSpec {
    pub fn fibonacci() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Fibonacci1d,
            depth: 0,
        }
    }

    pub fn lattice(dim: usize) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Lattice { dim },
            depth: 0,
        }
    }

    pub fn product(x: GeneratorSpec, y: GeneratorSpec) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Product2d {
                x: Box::new(x),
                y: Box::new(y),
            },
            depth: 0,
        }
    }

    pub fn dim(&self) -> Result<Dim, DeloneError> {
        match &self.kind {
            GeneratorKind::Fibonacci1d | GeneratorKind::Substitution1d { .. } => Ok(Dim::One),
            GeneratorKind::Lattice { dim } => {
                Dim::from_usize(*dim).ok_or(DeloneError::UnsupportedDimension(*dim))
            }
            GeneratorKind::Product2d { x, y } => {
                for f in [x, y] {
                    let d = f.dim()?;
                    if d != Dim::One {
                        return Err(DeloneError::UnsupportedDimension(d.d() + 1));
                    }
                }
                Ok(Dim::Two)
            }
        }
    }
}

/// A substitution on a finite alphabet with a tile length per letter.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionRule {
    symbols: Vec<char>,
    images: Vec<Vec<u8>>,
    lengths: Vec<f64>,
}

impl SubstitutionRule {
    pub fn fibonacci() -> Self {
        SubstitutionRule {
            symbols: vec!['a', 'b'],
            images: vec![vec![0, 1], vec![0]],
            lengths: vec![PHI, 1.0],
        }
    }

    pub fn from_letters(letters: &[LetterRule]) -> Result<Self, DeloneError> {
        if letters.is_empty() || letters.len() > u8::MAX as usize {
            return Err(DeloneError::InvalidSpec("alphabet size".into()));
        }
        let symbols: Vec<char> = letters.iter().map(|l| l.symbol).collect();
        let mut images = Vec::with_capacity(letters.len());
        for l in letters {
            if !(l.length > 0.0 && l.length.is_finite()) {
                return Err(DeloneError::InvalidSpec(format!(
                    "tile length of '{}' must be positive",
                    l.symbol
                )));
            }
            let img = l
                .image
                .chars()
                .map(|c| {
                    symbols
                        .iter()
                        .position(|&s| s == c)
                        .map(|p| p as u8)
                        .ok_or_else(|| DeloneError::InvalidSpec(format!("unknown letter '{c}'")))
                })
                .collect::<Result<Vec<u8>, _>>()?;
            if img.is_empty() {
                return Err(DeloneError::InvalidSpec("empty image".into()));
            }
            images.push(img);
        }
        let rule = SubstitutionRule {
            symbols,
            images,
            lengths: letters.iter().map(|l| l.length).collect(),
        };
        if !rule.is_primitive() {
            return Err(DeloneError::NonPrimitiveSubstitution);
        }
        Ok(rule)
    }

    pub fn alphabet_len(&self) -> usize {
        self.symbols.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Some power of the incidence matrix is strictly positive
    /// (Wielandt: exponent at most `(n - 1)^2 + 1`).
    pub fn is_primitive(&self) -> bool {
        let n = self.symbols.len();
        let mut reach: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.images[i].contains(&(j as u8)))
                    .collect()
            })
            .collect();
        let base = reach.clone();
        for _ in 0..((n - 1) * (n - 1) + 1) {
            if reach.iter().all(|r| r.iter().all(|&b| b)) {
                return true;
            }
            let next: Vec<Vec<bool>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).any(|k| reach[i][k] && base[k][j]))
                        .collect()
                })
                .collect();
            reach = next;
        }
        reach.iter().all(|r| r.iter().all(|&b| b))
    }

    pub fn apply(&self, word: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(word.len() * 2);
        for &c in word {
            out.extend_from_slice(&self.images[c as usize]);
        }
        out
    }

    pub fn iterate(&self, seed: u8, times: u32) -> Vec<u8> {
        let mut w = vec![seed];
        for _ in 0..times {
            w = self.apply(&w);
        }
        w
    }

    pub fn render(&self, word: &[u8]) -> String {
        word.iter().map(|&c| self.symbols[c as usize]).collect()
    }

    /// Left endpoints of the tiles of `word` laid out from 0.
    pub fn left_endpoints(&self, word: &[u8]) -> Vec<f64> {
        let mut counts = vec![0u64; self.symbols.len()];
        let mut out = Vec::with_capacity(word.len());
        for &c in word {
            out.push(self.position(&counts));
            counts[c as usize] += 1;
        }
        out
    }

    /// `Σ count_letter · length_letter`, evaluated from integer counts so
    /// that rounding does not accumulate along the word.
    fn position(&self, counts: &[u64]) -> f64 {
        counts
            .iter()
            .zip(&self.lengths)
            .map(|(&c, &l)| c as f64 * l)
            .sum()
    }

    /// A legal two-letter word `c|d` and a power `p` such that `σ^p(c)` ends
    /// with `c` and `σ^p(d)` starts with `d`; iterating gives a bi-infinite
    /// fixed point of `σ^p` through the origin.
    pub fn two_sided_seed(&self) -> Option<(u8, u8, u32)> {
        let n = self.symbols.len() as u32;
        let mut legal = std::collections::BTreeSet::new();
        for a in 0..self.symbols.len() as u8 {
            let mut w = vec![a];
            for _ in 0..(2 * n + 4) {
                w = self.apply(&w);
                if w.len() > 1 << 16 {
                    break;
                }
            }
            for p in w.windows(2) {
                legal.insert((p[0], p[1]));
            }
        }
        for p in 1..=(2 * n * n + 2) {
            for &(c, d) in &legal {
                let left = self.iterate(c, p);
                let right = self.iterate(d, p);
                if *left.last()? == c && right[0] == d {
                    return Some((c, d, p));
                }
            }
        }
        None
    }
}

/// Smallest period of a word (via the prefix function).
fn smallest_period(w: &[u8]) -> usize {
    let n = w.len();
    if n == 0 {
        return 0;
    }
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut k = pi[i - 1];
        while k > 0 && w[i] != w[k] {
            k = pi[k - 1];
        }
        if w[i] == w[k] {
            k += 1;
        }
        pi[i] = k;
    }
    n - pi[n - 1]
}

/// Raw output of a generator before radii are computed.
pub(crate) struct Generated {
    pub points: Vec<Point>,
    pub window: Aabb,
    pub periodic: bool,
}

pub(crate) fn generate_points(spec: &GeneratorSpec, extent: f64) -> Result<Generated, DeloneError> {
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(DeloneError::InvalidSpec(
            "target extent must be positive".into(),
        ));
    }
    let dim = spec.dim()?;
    match &spec.kind {
        GeneratorKind::Fibonacci1d => {
            line_from_rule(&SubstitutionRule::fibonacci(), spec.depth, extent)
        }
        GeneratorKind::Substitution1d { letters } => line_from_rule(
            &SubstitutionRule::from_letters(letters)?,
            spec.depth,
            extent,
        ),
        GeneratorKind::Lattice { .. } => {
            let m = extent.floor() as i64;
            let mut points = Vec::new();
            match dim {
                Dim::One => {
                    points.extend((-m..=m).map(|k| Point::on_line(k as f64)));
                }
                Dim::Two => {
                    for i in -m..=m {
                        for j in -m..=m {
                            points.push(Point::new(i as f64, j as f64));
                        }
                    }
                }
            }
            Ok(Generated {
                points,
                window: Aabb::centered(extent, dim),
                periodic: true,
            })
        }
        GeneratorKind::Product2d { x, y } => {
            let gx = generate_points(x, extent)?;
            let gy = generate_points(y, extent)?;
            let mut points = Vec::with_capacity(gx.points.len() * gy.points.len());
            for px in &gx.points {
                for py in &gy.points {
                    points.push(Point::new(px.x, py.x));
                }
            }
            Ok(Generated {
                points,
                window: Aabb::centered(extent, Dim::Two),
                periodic: gx.periodic || gy.periodic,
            })
        }
    }
}

fn line_from_rule(
    rule: &SubstitutionRule,
    depth: u32,
    extent: f64,
) -> Result<Generated, DeloneError> {
    let (c, d, p) = rule
        .two_sided_seed()
        .ok_or_else(|| DeloneError::InvalidSpec("no two-sided fixed point found".into()))?;
    let mut left = vec![c];
    let mut right = vec![d];
    let mut iterations = 0u32;
    let total = |w: &[u8]| -> f64 { w.iter().map(|&a| rule.lengths[a as usize]).sum() };
    while iterations < depth || total(&left) < extent || total(&right) < extent {
        for _ in 0..p {
            left = rule.apply(&left);
            right = rule.apply(&right);
        }
        iterations += p;
        if left.len() > MAX_WORD || right.len() > MAX_WORD {
            return Err(DeloneError::InvalidSpec(format!(
                "extent {extent} needs words longer than {MAX_WORD} letters"
            )));
        }
    }
    let mut points = Vec::new();
    // Left half: tiles placed so the last one ends at 0.
    let left_len = rule.position(&letter_counts(rule, &left));
    let left_pts = rule.left_endpoints(&left);
    for &x in &left_pts {
        let x = x - left_len;
        if x >= -extent {
            points.push(Point::on_line(x));
        }
    }
    for x in rule.left_endpoints(&right) {
        if x > extent {
            break;
        }
        points.push(Point::on_line(x));
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let probe = &right[..right.len().min(1 << 20)];
    let periodic = smallest_period(probe) * 3 <= probe.len();
    Ok(Generated {
        points,
        window: Aabb::centered(extent, Dim::One),
        periodic,
    })
}

fn letter_counts(rule: &SubstitutionRule, w: &[u8]) -> Vec<u64> {
    let mut counts = vec![0u64; rule.alphabet_len()];
    for &c in w {
        counts[c as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_depth_three() {
        let r = SubstitutionRule::fibonacci();
        let w = r.iterate(0, 3);
        assert_eq!(r.render(&w), "abaab");
        let pts = r.left_endpoints(&w);
        let want = [0.0, PHI, PHI + 1.0, 2.0 * PHI + 1.0, 3.0 * PHI + 1.0];
        for (a, b) in pts.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fibonacci_two_sided_seed() {
        let r = SubstitutionRule::fibonacci();
        assert_eq!(r.two_sided_seed(), Some((0, 0, 2)));
    }

    #[test]
    fn primitivity() {
        let bad = [
            LetterRule {
                symbol: 'a',
                image: "a".into(),
                length: 1.0,
            },
            LetterRule {
                symbol: 'b',
                image: "ab".into(),
                length: 1.0,
            },
        ];
        assert!(matches!(
            SubstitutionRule::from_letters(&bad),
            Err(DeloneError::NonPrimitiveSubstitution)
        ));
        let thue_morse = [
            LetterRule {
                symbol: 'a',
                image: "ab".into(),
                length: 1.0,
            },
            LetterRule {
                symbol: 'b',
                image: "ba".into(),
                length: 1.5,
            },
        ];
        assert!(SubstitutionRule::from_letters(&thue_morse).is_ok());
    }

    #[test]
    fn period_detection() {
        assert_eq!(smallest_period(b"abababab"), 2);
        assert_eq!(smallest_period(b"abaab"), 3);
    }

    #[test]
    fn lattice_window() {
        let g = generate_points(&GeneratorSpec::lattice(1), 10.0).unwrap();
        assert_eq!(g.points.len(), 21);
        assert!(g.periodic);
        assert!(matches!(
            generate_points(&GeneratorSpec::lattice(3), 10.0),
            Err(DeloneError::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn fibonacci_is_flagged_aperiodic() {
        let g = generate_points(&GeneratorSpec::fibonacci(), 500.0).unwrap();
        assert!(!g.periodic);
        assert!(g.points.iter().any(|p| p.x == 0.0));
        assert!(g.points.first().unwrap().x >= -500.0 && g.points.last().unwrap().x <= 500.0);
    }
}
