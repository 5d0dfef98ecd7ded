//! Strict CSV ingestion. The first row holds column names; every used cell
//! must parse as a finite number or be a declared categorical label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub path: PathBuf,
    pub features: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

type Encodings = BTreeMap<String, BTreeMap<String, i64>>;

fn parse_cell(raw: &str, column: &str, encodings: &Encodings) -> std::result::Result<f64, String> {
    if let Some(codes) = encodings.get(column) {
        return codes
            .get(raw)
            .map(|&c| c as f64)
            .ok_or_else(|| format!("column {column:?}: label {raw:?} has no declared encoding"));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("column {column:?}: cannot parse {raw:?} as a finite number")),
    }
}

/// Reads `features` (every column except `target` when empty) and the
/// optional target from a CSV file.
pub fn load_csv(path: &Path, features: &[String], target: Option<&str>, encodings: &Encodings) -> Result<Dataset> {
    let data_err = |line: u64, message: String| CliError::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(1, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(1, format!("no column named {name:?} (columns: {})", headers.join(", "))))
    };

    let target_idx = target.map(column).transpose()?;
    let features: Vec<String> = if features.is_empty() {
        headers.iter().filter(|h| Some(h.as_str()) != target).cloned().collect()
    } else {
        features.to_vec()
    };
    if features.is_empty() {
        return Err(data_err(1, "no feature columns".into()));
    }
    let mut feature_idx = Vec::with_capacity(features.len());
    for f in &features {
        let i = column(f)?;
        if Some(i) == target_idx {
            return Err(data_err(1, format!("column {f:?} is both a feature and the target")));
        }
        if feature_idx.contains(&i) {
            return Err(data_err(1, format!("column {f:?} is listed twice")));
        }
        feature_idx.push(i);
    }
    for name in encodings.keys() {
        column(name)?;
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| parse_cell(&record[i], &headers[i], encodings).map_err(|m| data_err(line, m));
        x.push(feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<f64>>>()?);
        if let Some(t) = target_idx {
            y.push(cell(t)?);
        }
    }
    if x.is_empty() {
        return Err(data_err(1, "no data rows".into()));
    }
    Ok(Dataset {
        path: path.to_path_buf(),
        features,
        x,
        y: target_idx.map(|_| y),
    })
}
