//! CSV ingestion of price or return series.

use std::io::Read;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::volatility::ReturnsMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Prices,
    Returns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub path: PathBuf,
    pub has_header: bool,
    /// Header name, or 1-based index when the file has no header.
    pub date_column: Option<String>,
    /// Same addressing as `date_column`; empty selects every non-date column.
    pub value_columns: Vec<String>,
    pub kind: SeriesKind,
    /// Multiplier applied to log-price differences.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub returns: ReturnsMatrix,
    pub names: Vec<String>,
    /// Date of each return row, when a date column was given.
    pub dates: Option<Vec<String>>,
    /// Rows discarded because a selected cell was missing.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || ["na", "nan", "null", "."].contains(&c.to_ascii_lowercase().as_str())
}

fn resolve(spec: &str, header: Option<&csv::StringRecord>, width: usize) -> Result<usize> {
    let found = match header {
        Some(h) => h.iter().position(|name| name.trim() == spec),
        None => spec.parse::<usize>().ok().filter(|&k| k >= 1 && k <= width).map(|k| k - 1),
    };
    found.ok_or_else(|| Error::Config(format!("column '{spec}' not found")))
}

pub fn load_series(file: &SeriesFile) -> Result<LoadedSeries> {
    let f = std::fs::File::open(&file.path)?;
    parse_series(f, file)
}

/// Parses series CSV from any reader. Row numbers in errors are 1-based file lines.
pub fn parse_series<R: Read>(reader: R, file: &SeriesFile) -> Result<LoadedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(file.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = if file.has_header {
        Some(rdr.headers().map_err(|e| csv_error(e, 1))?.clone())
    } else {
        None
    };
    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1 + usize::from(file.has_header);
        records.push((line, rec.map_err(|e| csv_error(e, line))?));
    }
    let width = header
        .as_ref()
        .map(|h| h.len())
        .or_else(|| records.first().map(|(_, r)| r.len()))
        .unwrap_or(0);
    let date = file
        .date_column
        .as_deref()
        .map(|d| resolve(d, header.as_ref(), width))
        .transpose()?;
    let columns: Vec<usize> = if file.value_columns.is_empty() {
        (0..width).filter(|c| Some(*c) != date).collect()
    } else {
        file.value_columns
            .iter()
            .map(|c| resolve(c, header.as_ref(), width))
            .collect::<Result<_>>()?
    };
    if columns.is_empty() {
        return Err(Error::Config("no value columns selected".into()));
    }
    let names = columns
        .iter()
        .map(|&c| match &header {
            Some(h) => h[c].to_string(),
            None => format!("series_{}", c + 1),
        })
        .collect();

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dates = Vec::new();
    let mut dropped_rows = 0;
    for (line, rec) in &records {
        let cells: Vec<&str> = columns.iter().map(|&c| rec.get(c).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped_rows += 1;
            continue;
        }
        let values = cells
            .iter()
            .zip(&columns)
            .map(|(cell, &c)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: *line,
                        column: c + 1,
                        message: format!("'{cell}' is not a number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(d) = date {
            dates.push(rec.get(d).unwrap_or("").to_string());
        }
        rows.push((*line, values));
    }

    let data: Vec<Vec<f64>> = match file.kind {
        SeriesKind::Returns => rows.iter().map(|(_, v)| v.clone()).collect(),
        SeriesKind::Prices => {
            for (line, v) in &rows {
                if let Some(k) = v.iter().position(|p| *p <= 0.0) {
                    return Err(Error::NonPositivePrice {
                        row: *line,
                        column: columns[k] + 1,
                        value: v[k],
                    });
                }
            }
            if !dates.is_empty() {
                dates.remove(0);
            }
            rows.windows(2)
                .map(|w| {
                    w[1].1
                        .iter()
                        .zip(&w[0].1)
                        .map(|(p1, p0)| file.scale * (p1.ln() - p0.ln()))
                        .collect()
                })
                .collect()
        }
    };
    if data.is_empty() {
        return Err(Error::Parse {
            row: records.last().map_or(1, |(l, _)| *l),
            column: 0,
            message: "no usable observations".into(),
        });
    }
    Ok(LoadedSeries {
        returns: ReturnsMatrix::from_rows(&data)?,
        names,
        dates: date.map(|_| dates),
        dropped_rows,
    })
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let row = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}
