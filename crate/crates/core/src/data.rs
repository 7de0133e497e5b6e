//! Fatigue dataset container and CSV input/output.
//!
//! The on-disk format is a plain CSV with a header row. Column names are
//! remappable through [`ColumnMap`], so lab exports can be read without
//! editing the file. An optional first line of the form
//! `# name=... unit=...` carries dataset metadata; files written by
//! [`save_dataset`] include it so a load/save round trip is lossless.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

/// One specimen: the applied loading and the observed outcome.
///
/// `cycles` is the failure life, or the test length when `is_runout` is
/// true. Exactly one of `stress_ratio` and `s_eq_direct` should be present
/// unless the dataset is meant for the identity transform, in which case
/// rows may omit both (the max stress then stands in for the equivalent
/// stress).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatigueObservation {
    pub s_max: f64,
    pub stress_ratio: Option<f64>,
    pub cycles: f64,
    pub is_runout: bool,
    pub group: Option<String>,
    pub s_eq_direct: Option<f64>,
}

/// A named collection of observations in a single stress unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatigueDataset {
    pub name: String,
    pub unit: String,
    pub observations: Vec<FatigueObservation>,
}

impl FatigueDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn failure_count(&self) -> usize {
        self.observations.iter().filter(|o| !o.is_runout).count()
    }

    pub fn run_out_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_runout).count()
    }

    /// Distinct group labels in first-appearance order. Rows without a
    /// group fall into an unnamed stratum reported as `None`.
    pub fn strata(&self) -> Vec<Option<String>> {
        let mut seen = Vec::new();
        for o in &self.observations {
            if !seen.contains(&o.group) {
                seen.push(o.group.clone());
            }
        }
        seen
    }
}

/// CSV column names. Defaults match the canonical schema written by
/// [`save_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub s_max: String,
    pub stress_ratio: String,
    pub cycles: String,
    pub runout: String,
    pub group: String,
    pub s_eq: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            s_max: "s_max".into(),
            stress_ratio: "stress_ratio".into(),
            cycles: "cycles".into(),
            runout: "runout".into(),
            group: "group".into(),
            s_eq: "s_eq".into(),
        }
    }
}

impl ColumnMap {
    /// Apply `name=value` overrides, e.g. `cycles=Nf`. Unknown names error.
    pub fn with_overrides(mut self, pairs: &[(String, String)]) -> Result<Self, DataError> {
        for (key, value) in pairs {
            match key.as_str() {
                "s_max" => self.s_max = value.clone(),
                "stress_ratio" => self.stress_ratio = value.clone(),
                "cycles" => self.cycles = value.clone(),
                "runout" => self.runout = value.clone(),
                "group" => self.group = value.clone(),
                "s_eq" => self.s_eq = value.clone(),
                other => return Err(DataError::UnknownMapKey(other.to_string())),
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("no such column for --map override: {0:?}")]
    UnknownMapKey(String),
    #[error("row {row}: cannot parse {column} value {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: cycles must be positive, got {value}")]
    NonPositiveCycles { row: usize, value: f64 },
    #[error("row {row}: stress must be positive, got {value}")]
    NonPositiveStress { row: usize, value: f64 },
    #[error("row {row}: stress ratio must be below 1, got {value}")]
    RatioAtLeastOne { row: usize, value: f64 },
    #[error("row {row}: give stress_ratio or s_eq, not both")]
    BothLoadingColumns { row: usize },
    #[error("dataset has no rows")]
    Empty,
    #[error("dataset has no failures, only run-outs")]
    NoFailures,
}

/// Read a dataset from a CSV file. `row` in errors is the 1-based data row
/// (header excluded), matching what a spreadsheet user counts.
pub fn load_dataset(path: &Path, columns: &ColumnMap) -> Result<FatigueDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let default_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    load_dataset_from_reader(BufReader::new(file), columns, &default_name)
}

/// Same as [`load_dataset`] for any reader. `default_name` is used when the
/// stream has no metadata line.
pub fn load_dataset_from_reader<R: Read>(
    reader: BufReader<R>,
    columns: &ColumnMap,
    default_name: &str,
) -> Result<FatigueDataset, DataError> {
    let mut reader = reader;
    let mut name = default_name.to_string();
    let mut unit = String::new();

    // Peek for the optional metadata comment before handing the stream to
    // the CSV parser.
    let mut first_line = String::new();
    reader
        .read_line(&mut first_line)
        .map_err(|source| DataError::Io {
            path: default_name.to_string(),
            source,
        })?;
    let body: Box<dyn Read> = if let Some(meta) = first_line.strip_prefix('#') {
        for field in meta.split(',') {
            if let Some((k, v)) = field.split_once('=') {
                match k.trim() {
                    "name" => name = v.trim().to_string(),
                    "unit" => unit = v.trim().to_string(),
                    _ => {}
                }
            }
        }
        Box::new(reader)
    } else {
        Box::new(std::io::Cursor::new(first_line.into_bytes()).chain(reader))
    };

    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(body);

    let headers = csv_reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h, i))
        .collect();

    let col = |name: &str| index.get(name).copied();
    let cycles_idx = col(&columns.cycles).ok_or_else(|| DataError::MissingColumn(columns.cycles.clone()))?;
    let runout_idx = col(&columns.runout).ok_or_else(|| DataError::MissingColumn(columns.runout.clone()))?;
    let s_max_idx = col(&columns.s_max);
    let s_eq_idx = col(&columns.s_eq);
    if s_max_idx.is_none() && s_eq_idx.is_none() {
        return Err(DataError::MissingColumn(columns.s_max.clone()));
    }
    let ratio_idx = col(&columns.stress_ratio);
    let group_idx = col(&columns.group);

    let mut observations = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |idx: Option<usize>| -> Option<&str> {
            idx.and_then(|j| record.get(j)).filter(|v| !v.is_empty())
        };

        let parse_f64 = |idx: usize, column: &str| -> Result<f64, DataError> {
            let raw = record.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::BadCell {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                })
        };
        let parse_opt_f64 = |idx: Option<usize>, column: &str| -> Result<Option<f64>, DataError> {
            match cell(idx) {
                None => Ok(None),
                Some(raw) => raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| DataError::BadCell {
                        row,
                        column: column.to_string(),
                        value: raw.to_string(),
                    }),
            }
        };

        let cycles = parse_f64(cycles_idx, &columns.cycles)?;
        if cycles <= 0.0 {
            return Err(DataError::NonPositiveCycles { row, value: cycles });
        }

        let runout_raw = record.get(runout_idx).unwrap_or("");
        let is_runout = match runout_raw.to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => {
                return Err(DataError::BadCell {
                    row,
                    column: columns.runout.clone(),
                    value: runout_raw.to_string(),
                })
            }
        };

        let stress_ratio = parse_opt_f64(ratio_idx, &columns.stress_ratio)?;
        if let Some(r) = stress_ratio {
            if r >= 1.0 {
                return Err(DataError::RatioAtLeastOne { row, value: r });
            }
        }

        let s_eq_direct = parse_opt_f64(s_eq_idx, &columns.s_eq)?;
        if stress_ratio.is_some() && s_eq_direct.is_some() {
            return Err(DataError::BothLoadingColumns { row });
        }

        let s_max = match (cell(s_max_idx), s_eq_direct) {
            (Some(_), _) => parse_f64(s_max_idx.unwrap(), &columns.s_max)?,
            // Rows recorded directly in equivalent stress reuse it as the
            // max stress so the field is always populated.
            (None, Some(s)) => s,
            (None, None) => {
                return Err(DataError::BadCell {
                    row,
                    column: columns.s_max.clone(),
                    value: String::new(),
                })
            }
        };
        if s_max <= 0.0 {
            return Err(DataError::NonPositiveStress { row, value: s_max });
        }
        if let Some(s) = s_eq_direct {
            if s <= 0.0 {
                return Err(DataError::NonPositiveStress { row, value: s });
            }
        }

        let group = cell(group_idx).map(|g| g.to_string());

        observations.push(FatigueObservation {
            s_max,
            stress_ratio,
            cycles,
            is_runout,
            group,
            s_eq_direct,
        });
    }

    if observations.is_empty() {
        return Err(DataError::Empty);
    }
    if observations.iter().all(|o| o.is_runout) {
        return Err(DataError::NoFailures);
    }

    Ok(FatigueDataset {
        name,
        unit,
        observations,
    })
}

/// Write a dataset in the canonical schema, metadata line included.
pub fn save_dataset(dataset: &FatigueDataset, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    save_dataset_to_writer(dataset, file)
}

pub fn save_dataset_to_writer<W: Write>(
    dataset: &FatigueDataset,
    mut writer: W,
) -> Result<(), DataError> {
    writeln!(writer, "# name={}, unit={}", dataset.name, dataset.unit).map_err(|source| {
        DataError::Io {
            path: dataset.name.clone(),
            source,
        }
    })?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["s_max", "stress_ratio", "cycles", "runout", "group", "s_eq"])?;
    let fmt = |v: f64| {
        let mut buf = ryu_format(v);
        if buf.ends_with(".0") {
            buf.truncate(buf.len() - 2);
        }
        buf
    };
    for o in &dataset.observations {
        w.write_record([
            fmt(o.s_max),
            o.stress_ratio.map(fmt).unwrap_or_default(),
            fmt(o.cycles),
            (if o.is_runout { "1" } else { "0" }).to_string(),
            o.group.clone().unwrap_or_default(),
            o.s_eq_direct.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: dataset.name.clone(),
        source,
    })?;
    Ok(())
}

/// Shortest decimal representation that parses back to the same double.
fn ryu_format(v: f64) -> String {
    let mut s = format!("{v}");
    if s.parse::<f64>() != Ok(v) {
        s = format!("{v:?}");
    }
    s
}
