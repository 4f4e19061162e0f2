//! Files written by runs and experiments: `log.csv`, `summary.json` and
//! `table.csv`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::engine::{SimLog, LOG_COLUMNS};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// One row per control tick; header only when the log is empty.
pub fn write_log_csv(path: &Path, log: &SimLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(LOG_COLUMNS).map_err(|e| csv_err(path, e))?;
    for row in &log.rows {
        w.write_record(row.record()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Table rows with their column names.
pub struct Table<'a> {
    pub header: &'a [&'a str],
    pub rows: Vec<Vec<String>>,
}

/// Writes whichever of the three outputs are given into `dir`, creating it
/// if needed.
pub fn write_outputs<S: Serialize>(dir: &Path, log: Option<&SimLog>, summary: &S, table: Option<&Table>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(log) = log {
        write_log_csv(&dir.join("log.csv"), log)?;
    }
    write_json(&dir.join("summary.json"), summary)?;
    if let Some(t) = table {
        write_table(&dir.join("table.csv"), t.header, &t.rows)?;
    }
    Ok(())
}
