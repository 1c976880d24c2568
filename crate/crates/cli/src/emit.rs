//! Report files: flat CSV tables, a JSON document and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Csv(csv::Error::from(e.into_error())))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Writes the tables and/or the document; returns the paths written, in order.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    tables: &[Table],
    document: &impl Serialize,
    format: Format,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if matches!(format, Format::Table | Format::Both) {
        for t in tables {
            let path = dir.join(format!("{}.csv", t.name));
            write_file(&path, &t.to_csv()?)?;
            written.push(path);
        }
    }
    if matches!(format, Format::Document | Format::Both) {
        let path = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(document)?;
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn header_first() {
        let mut t = Table::new("d", &["t", "density"]);
        t.push(vec![num(0.5), num(0.25)]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert!(csv.starts_with("t,density\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
