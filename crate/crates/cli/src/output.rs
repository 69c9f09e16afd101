//! Artifact files: every one carries the schema version and config hash.

use crate::CliError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    config_hash: &'a str,
    command: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
pub struct Loaded<T> {
    pub schema_version: u32,
    pub data: T,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Resource(format!("{}: {e}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io(path, e))?))
}

pub fn write_json<T: Serialize>(
    path: &Path,
    hash: &str,
    command: &str,
    data: &T,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        command,
        data,
    };
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<Loaded<T>, CliError> {
    let f = File::open(path).map_err(|_| {
        CliError::Config(format!("{} not found; run `{stage}` first", path.display()))
    })?;
    let loaded: Loaded<T> = serde_json::from_reader(BufReader::new(f)).map_err(|e| io(path, e))?;
    if loaded.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{} has schema version {}, expected {SCHEMA_VERSION}",
            path.display(),
            loaded.schema_version
        )));
    }
    Ok(loaded)
}

/// `#`-comment header for CSV files.
pub fn csv_header<W: Write + ?Sized>(w: &mut W, hash: &str) -> std::io::Result<()> {
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(w, "# config_hash={hash}")
}

/// Filename-safe rendering of a radius.
pub fn radius_tag(s: f64) -> String {
    format!("{s}").replace('.', "p")
}
