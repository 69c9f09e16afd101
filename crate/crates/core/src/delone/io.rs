//! CSV point files and key=value metadata sidecars.

use super::{DeloneError, DeloneWindow, GeneratorSpec};
use crate::geometry::{Aabb, Dim, Point};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// 17 significant digits; parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(e: impl std::fmt::Display) -> DeloneError {
    DeloneError::Io(e.to_string())
}

pub fn write_points_csv<W: Write>(mut w: W, points: &[Point], dim: Dim) -> Result<(), DeloneError> {
    match dim {
        Dim::One => writeln!(w, "x").map_err(io_err)?,
        Dim::Two => writeln!(w, "x,y").map_err(io_err)?,
    }
    for p in points {
        match dim {
            Dim::One => writeln!(w, "{}", format_real(p.x)),
            Dim::Two => writeln!(w, "{},{}", format_real(p.x), format_real(p.y)),
        }
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a point CSV; lines starting with `#` are ignored.
pub fn read_points_csv<R: BufRead>(r: R) -> Result<(Vec<Point>, Dim), DeloneError> {
    let mut dim = None;
    let mut points = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(d) = dim else {
            dim = Some(match line {
                "x" => Dim::One,
                "x,y" => Dim::Two,
                h => return Err(DeloneError::Io(format!("bad CSV header '{h}'"))),
            });
            continue;
        };
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| DeloneError::Io(format!("line {}: {e}", n + 1)))?;
        if vals.len() != d.d() {
            return Err(DeloneError::Io(format!(
                "line {}: expected {} columns",
                n + 1,
                d.d()
            )));
        }
        points.push(Point::new(vals[0], vals.get(1).copied().unwrap_or(0.0)));
    }
    Ok((
        points,
        dim.ok_or_else(|| DeloneError::Io("missing CSV header".into()))?,
    ))
}

pub fn write_metadata<W: Write>(
    mut w: W,
    meta: &BTreeMap<String, String>,
) -> Result<(), DeloneError> {
    for (k, v) in meta {
        writeln!(w, "{k}={v}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_metadata<R: BufRead>(r: R) -> Result<BTreeMap<String, String>, DeloneError> {
    let mut out = BTreeMap::new();
    for line in r.lines() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DeloneError::Io(format!("expected key=value, got '{line}'")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl DeloneWindow {
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("dim".into(), self.dim.d().to_string());
        m.insert("window_min_x".into(), format_real(self.window.min.x));
        m.insert("window_min_y".into(), format_real(self.window.min.y));
        m.insert("window_max_x".into(), format_real(self.window.max.x));
        m.insert("window_max_y".into(), format_real(self.window.max.y));
        m.insert("r_disc".into(), format_real(self.r_disc));
        m.insert("r_dense".into(), format_real(self.r_dense));
        m.insert("periodic".into(), self.periodic.to_string());
        m.insert("point_count".into(), self.points.len().to_string());
        m.insert(
            "generator".into(),
            serde_json::to_string(&self.generator).unwrap_or_default(),
        );
        m
    }

    pub fn save(
        &self,
        csv: &Path,
        meta: &Path,
        extra: &BTreeMap<String, String>,
    ) -> Result<(), DeloneError> {
        write_points_csv(
            BufWriter::new(File::create(csv).map_err(io_err)?),
            &self.points,
            self.dim,
        )?;
        let mut m = self.metadata();
        m.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        write_metadata(BufWriter::new(File::create(meta).map_err(io_err)?), &m)
    }

    pub fn load(csv: &Path, meta: &Path) -> Result<DeloneWindow, DeloneError> {
        let (points, dim) = read_points_csv(BufReader::new(File::open(csv).map_err(io_err)?))?;
        let m = read_metadata(BufReader::new(File::open(meta).map_err(io_err)?))?;
        let get = |k: &str| -> Result<&String, DeloneError> {
            m.get(k)
                .ok_or_else(|| DeloneError::Io(format!("metadata key '{k}' missing")))
        };
        let num = |k: &str| -> Result<f64, DeloneError> { get(k)?.parse::<f64>().map_err(io_err) };
        let window = Aabb::new(
            Point::new(num("window_min_x")?, num("window_min_y")?),
            Point::new(num("window_max_x")?, num("window_max_y")?),
            dim,
        );
        let generator: GeneratorSpec = serde_json::from_str(get("generator")?).map_err(io_err)?;
        let periodic = get("periodic")? == "true";
        DeloneWindow::from_parts(points, window, generator, periodic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let pts = vec![
            Point::new(0.1, -1.0 / 3.0),
            Point::new(1e6 + 1.618_033_988_749_895, 2.0),
        ];
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts, Dim::Two).unwrap();
        let (back, dim) = read_points_csv(buf.as_slice()).unwrap();
        assert_eq!(dim, Dim::Two);
        assert_eq!(back, pts);
    }

    #[test]
    fn metadata_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), "1".to_string());
        m.insert("json".to_string(), "{\"k\":\"x=y\"}".to_string());
        let mut buf = Vec::new();
        write_metadata(&mut buf, &m).unwrap();
        assert_eq!(read_metadata(buf.as_slice()).unwrap(), m);
    }
}
