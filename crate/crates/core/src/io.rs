//! Numeric CSV input with an optional header line.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Parsed table and, when present, its header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub data: Dataset,
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string())
}

/// Parses comma-separated numbers. The first record is taken as a header
/// when any of its fields is not a number. `origin` names the source in
/// error messages; lines and columns in errors are 1-based.
pub fn parse_csv(text: &str, origin: &str) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let err = |line: u64, column: usize, message: String| Error::Csv {
        path: origin.to_string(),
        line: line as usize,
        column,
        message,
    };

    let mut header = None;
    let mut width = None;
    let mut data = Vec::new();
    let mut n = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, 0, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        if idx == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(err(line, rec.len().min(w) + 1, format!("expected {w} fields, found {}", rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line, c + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, c + 1, format!("`{field}` is not finite")));
            }
            data.push(v);
        }
        n += 1;
    }
    let p = width.unwrap_or(0);
    if n == 0 || p == 0 {
        return Err(err(1, 1, "no data rows".into()));
    }
    Ok(CsvTable {
        header,
        data: Dataset::new(n, p, data)?,
    })
}
