//! Flat-file formats: CSV tables with a header row, floats written with 17
//! significant digits so every `f64` survives a write/read cycle unchanged.

use std::fs;
use std::path::Path;

use locreg::{Dataset, PointSet};
use serde::Serialize;

use crate::error::CliError;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Parse(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn x_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

struct Table {
    x_cols: Vec<usize>,
    y_col: Option<usize>,
    records: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    let mut x: Vec<(usize, usize)> = Vec::new();
    let mut y_col = None;
    for (c, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name == "y" {
            y_col = Some(c);
        } else if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x.push((idx, c));
        }
    }
    x.sort_unstable();
    if x.is_empty() || x.iter().enumerate().any(|(i, (idx, _))| *idx != i + 1) {
        return Err(CliError::Parse(format!(
            "{}: expected predictor columns x1..xD",
            path.display()
        )));
    }
    let records = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok(Table {
        x_cols: x.into_iter().map(|(_, c)| c).collect(),
        y_col,
        records,
    })
}

fn field(path: &Path, rec: &csv::StringRecord, row: usize, col: usize) -> Result<f64, CliError> {
    let s = rec.get(col).unwrap_or("").trim();
    s.parse::<f64>().map_err(|_| {
        CliError::Parse(format!(
            "{}: row {}: cannot parse '{s}' as a number",
            path.display(),
            row + 1
        ))
    })
}

fn points_of(path: &Path, t: &Table) -> Result<PointSet, CliError> {
    let mut coords = Vec::with_capacity(t.records.len() * t.x_cols.len());
    for (i, rec) in t.records.iter().enumerate() {
        for &c in &t.x_cols {
            coords.push(field(path, rec, i, c)?);
        }
    }
    Ok(PointSet::from_flat(coords, t.x_cols.len())?)
}

pub fn read_points(path: &Path) -> Result<PointSet, CliError> {
    let t = read_table(path)?;
    points_of(path, &t)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let t = read_table(path)?;
    let y_col = t
        .y_col
        .ok_or_else(|| CliError::Parse(format!("{}: missing column 'y'", path.display())))?;
    let x = points_of(path, &t)?;
    let y = t
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| field(path, rec, i, y_col))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(x, y)?)
}

pub fn dataset_rows(data: &Dataset) -> Vec<Vec<String>> {
    data.x()
        .rows()
        .zip(data.y())
        .map(|(r, y)| {
            r.iter()
                .chain(std::iter::once(y))
                .map(|v| fmt_f64(*v))
                .collect()
        })
        .collect()
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut header = x_header(data.dim());
    header.push("y".into());
    write_csv(path, &header, &dataset_rows(data))
}
