//! Plain-text `key = value` run configuration.

use lr_towers::delone::GeneratorSpec;
use lr_towers::towers::TowerParams;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("line {line}: {msg}")]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

fn err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Fibonacci,
    Fibonacci2d,
    Lattice1,
    Lattice2,
}

impl Generator {
    pub fn spec(self) -> GeneratorSpec {
        match self {
            Generator::Fibonacci => GeneratorSpec::fibonacci(),
            Generator::Fibonacci2d => {
                GeneratorSpec::product(GeneratorSpec::fibonacci(), GeneratorSpec::fibonacci())
            }
            Generator::Lattice1 => GeneratorSpec::lattice(1),
            Generator::Lattice2 => GeneratorSpec::lattice(2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Generator::Fibonacci => "fibonacci",
            Generator::Fibonacci2d => "fibonacci2d",
            Generator::Lattice1 => "lattice1",
            Generator::Lattice2 => "lattice2",
        }
    }

    pub fn is_lattice(self) -> bool {
        matches!(self, Generator::Lattice1 | Generator::Lattice2)
    }
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fibonacci" => Ok(Generator::Fibonacci),
            "fibonacci2d" => Ok(Generator::Fibonacci2d),
            "lattice1" | "lattice" => Ok(Generator::Lattice1),
            "lattice2" => Ok(Generator::Lattice2),
            other => Err(format!("unknown generator '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub generator: Generator,
    pub extent: f64,
    pub s0: f64,
    pub k: f64,
    pub n_max: usize,
    /// Estimated from the point set when absent.
    pub l_hat: Option<f64>,
    pub enforce_theorem_k: bool,
    pub allow_periodic: bool,
    pub strict: bool,
    /// Patch radii for the deviation sweep; `[s0]` when empty.
    pub s_values: Vec<f64>,
    pub n_values: Vec<f64>,
    pub anchors: usize,
    pub samples: usize,
    pub addresses: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: Generator::Fibonacci,
            extent: 10_000.0,
            s0: 3.0,
            k: 20.0,
            n_max: 3,
            l_hat: None,
            enforce_theorem_k: false,
            allow_periodic: false,
            strict: false,
            s_values: Vec::new(),
            n_values: (0..13).map(|k| 10.0 * 10f64.powf(k as f64 / 6.0)).collect(),
            anchors: 20,
            samples: 100_000,
            addresses: 10,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("cannot parse '{v}' for '{key}'")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse::<f64>(line, key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, v) = body
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key = value, got '{body}'")))?;
            let (key, v) = (key.trim(), v.trim());
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(err(line, format!("'{key}' already set on line {prev}")));
            }
            match key {
                "generator" => c.generator = v.parse().map_err(|e: String| err(line, e))?,
                "extent" => c.extent = parse(line, key, v)?,
                "s0" => c.s0 = parse(line, key, v)?,
                "k" | "K" => c.k = parse(line, key, v)?,
                "n_max" => c.n_max = parse(line, key, v)?,
                "l_hat" => c.l_hat = Some(parse(line, key, v)?),
                "enforce_theorem_k" => c.enforce_theorem_k = parse(line, key, v)?,
                "allow_periodic" => c.allow_periodic = parse(line, key, v)?,
                "strict" => c.strict = parse(line, key, v)?,
                "s_values" => c.s_values = parse_list(line, key, v)?,
                "n_values" => c.n_values = parse_list(line, key, v)?,
                "anchors" => c.anchors = parse(line, key, v)?,
                "samples" => c.samples = parse(line, key, v)?,
                "addresses" => c.addresses = parse(line, key, v)?,
                "seed" => c.seed = parse(line, key, v)?,
                other => return Err(err(line, format!("unknown key '{other}'"))),
            }
        }
        Ok(c)
    }

    /// Checks every value before any computation starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(err(
                    0,
                    format!("'{name}' must be positive and finite, got {v}"),
                ))
            }
        };
        positive("extent", self.extent)?;
        positive("s0", self.s0)?;
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(err(0, format!("'k' must exceed 1, got {}", self.k)));
        }
        if self.n_max == 0 {
            return Err(err(0, "'n_max' must be at least 1"));
        }
        if let Some(l) = self.l_hat {
            positive("l_hat", l)?;
        }
        for &s in &self.s_values {
            positive("s_values", s)?;
        }
        if self.n_values.is_empty() {
            return Err(err(0, "'n_values' is empty"));
        }
        for &n in &self.n_values {
            positive("n_values", n)?;
        }
        if self.anchors == 0 || self.samples == 0 {
            return Err(err(0, "'anchors' and 'samples' must be at least 1"));
        }
        self.tower_params(self.l_hat.unwrap_or(1.0))
            .validate()
            .map_err(|e| err(0, e.to_string()))
    }

    pub fn tower_params(&self, l_hat: f64) -> TowerParams {
        let mut p = TowerParams::new(self.s0, self.k, self.n_max, l_hat);
        p.enforce_theorem_k = self.enforce_theorem_k;
        p.strict = self.strict;
        p.allow_periodic = self.allow_periodic || self.generator.is_lattice();
        p
    }

    pub fn patch_radii(&self) -> Vec<f64> {
        if self.s_values.is_empty() {
            vec![self.s0]
        } else {
            self.s_values.clone()
        }
    }

    /// Canonical rendering; every key, resolved defaults included.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "generator={}", self.generator.name());
        let _ = writeln!(s, "extent={:?}", self.extent);
        let _ = writeln!(s, "s0={:?}", self.s0);
        let _ = writeln!(s, "k={:?}", self.k);
        let _ = writeln!(s, "n_max={}", self.n_max);
        let _ = writeln!(
            s,
            "l_hat={}",
            self.l_hat
                .map(|l| format!("{l:?}"))
                .unwrap_or_else(|| "auto".into())
        );
        let _ = writeln!(s, "enforce_theorem_k={}", self.enforce_theorem_k);
        let _ = writeln!(s, "allow_periodic={}", self.allow_periodic);
        let _ = writeln!(s, "strict={}", self.strict);
        let _ = writeln!(s, "s_values={}", list(&self.patch_radii()));
        let _ = writeln!(s, "n_values={}", list(&self.n_values));
        let _ = writeln!(s, "anchors={}", self.anchors);
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "addresses={}", self.addresses);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().fold(
            String::with_capacity(64),
            |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse(
            "# run\ngenerator = lattice2\nextent=50 # small\nn_values = 10, 20\nseed=7\n",
        )
        .unwrap();
        assert_eq!(c.generator, Generator::Lattice2);
        assert_eq!(c.extent, 50.0);
        assert_eq!(c.n_values, vec![10.0, 20.0]);
        assert_eq!(c.seed, 7);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("extent = ten").is_err());
        assert!(RunConfig::parse("extent = 1\nextent = 2").is_err());
        assert!(RunConfig::parse("no equals sign").is_err());
        let c = RunConfig::parse("n_values =").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("k = 0.5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
