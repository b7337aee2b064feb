//! Versioned CSV output and JSON config input.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Bumped whenever any CSV header changes.
pub const SCHEMA_VERSION: &str = "poincare-csv/1";

/// Metadata line embedded as the first line of every output file.
pub fn metadata(subcommand: &str, seed: Option<u64>, params: Value) -> String {
    json!({
        "schema": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "seed": seed,
        "params": params,
    })
    .to_string()
}

pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(&'static str),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn create(dir: &Path, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

pub fn write_table(dir: &Path, name: &str, meta: &str, table: &Table) -> CliResult<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "# {meta}").map_err(io)?;
    writeln!(w, "{}", table.header.join(",")).map_err(io)?;
    for row in &table.rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::F(v) => format!("{v:.16e}"),
                Cell::U(v) => v.to_string(),
                Cell::B(v) => v.to_string(),
                Cell::S(v) => v.to_string(),
            })
            .collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Parse a JSON config, reporting the failing path on schema violations.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Json {
        file: path.to_path_buf(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}
