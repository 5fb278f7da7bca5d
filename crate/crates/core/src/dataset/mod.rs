//! Sensor tables: schema, labelled readings, CSV carrier and preprocessing.

mod csv_io;
mod preprocess;
pub mod schema;

use std::collections::HashSet;
use std::path::PathBuf;

use thiserror::Error;

pub use csv_io::{load_dataset, read_dataset, write_csv, write_csv_file, SchemaPolicy};
pub use preprocess::{split_train_test, undersample_majority, SplitPair, UndersampleTarget};
pub use schema::{
    fault_taxonomy, installed_sensors, lookup_installed, FaultClass, SensorKind, SensorMeta, Unit, CONDENSER_SENSORS,
    FAULT_OCCURRENCE,
};

/// Fault class id. 0 is the non-faulty condition.
pub type ClassId = u32;

/// One offending cell of an ingested file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellError {
    /// Zero-based data row (the header is not counted).
    pub row: usize,
    pub column: String,
    pub reason: String,
}

impl std::fmt::Display for CellError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {} column {}: {}", self.row, self.column, self.reason)
    }
}

fn join_cells(cells: &[CellError]) -> String {
    const SHOWN: usize = 5;
    let mut out: Vec<String> = cells.iter().take(SHOWN).map(ToString::to_string).collect();
    if cells.len() > SHOWN {
        out.push(format!("... {} more", cells.len() - SHOWN));
    }
    out.join("; ")
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{} malformed cell(s): {}", .0.len(), join_cells(.0))]
    MalformedRow(Vec<CellError>),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at row {row}, sensor {sensor}")]
    NonFinite { row: usize, sensor: String },
    #[error("label {label} at row {row} is not below the class count {n_classes}")]
    LabelOutOfRange {
        row: usize,
        label: ClassId,
        n_classes: usize,
    },
    #[error("unknown sensor {0:?}")]
    UnknownSensor(String),
    #[error("only one class present; rebalancing needs at least two")]
    SingleClass,
    #[error("requested {requested} majority rows but only {available} exist")]
    TargetTooLarge { requested: usize, available: usize },
    #[error("train fraction {0} leaves one side of the split empty or is outside (0, 1)")]
    DegenerateFraction(f64),
    #[error("class {class} has {count} row(s); stratified splitting needs at least 2")]
    ClassTooSmall { class: ClassId, count: usize },
}

/// Column-major table of sensor readings with one class label per row.
///
/// Construction validates every invariant, so a `Dataset` in hand is always
/// finite, labelled below `n_classes`, and schema-consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<SensorMeta>,
    columns: Vec<Vec<f64>>,
    labels: Vec<ClassId>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        schema: Vec<SensorMeta>,
        columns: Vec<Vec<f64>>,
        labels: Vec<ClassId>,
        n_classes: usize,
    ) -> Result<Self, DatasetError> {
        if schema.len() != columns.len() {
            return Err(DatasetError::ShapeMismatch(format!(
                "{} schema entries but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for meta in &schema {
            if !seen.insert(meta.symbol.as_str()) {
                return Err(DatasetError::SchemaMismatch(format!(
                    "duplicate sensor symbol {:?}",
                    meta.symbol
                )));
            }
        }
        for (meta, column) in schema.iter().zip(&columns) {
            if column.len() != labels.len() {
                return Err(DatasetError::ShapeMismatch(format!(
                    "column {} has {} rows, labels have {}",
                    meta.symbol,
                    column.len(),
                    labels.len()
                )));
            }
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row,
                    sensor: meta.symbol.clone(),
                });
            }
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n_classes) {
            return Err(DatasetError::LabelOutOfRange { row, label, n_classes });
        }
        Ok(Dataset {
            schema,
            columns,
            labels,
            n_classes,
        })
    }

    /// Builds a dataset from row-major values, inferring `n_classes` as
    /// `max(label) + 1`.
    pub fn from_rows(schema: Vec<SensorMeta>, rows: &[Vec<f64>], labels: Vec<ClassId>) -> Result<Self, DatasetError> {
        if rows.len() != labels.len() {
            return Err(DatasetError::ShapeMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); schema.len()];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DatasetError::ShapeMismatch(format!(
                    "row {i} has {} values, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            for (column, &v) in columns.iter_mut().zip(row) {
                column.push(v);
            }
        }
        let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        Dataset::new(schema, columns, labels, n_classes)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.schema.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn schema(&self) -> &[SensorMeta] {
        &self.schema
    }

    pub fn symbols(&self) -> Vec<String> {
        self.schema.iter().map(|m| m.symbol.clone()).collect()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    pub fn sensor_index(&self, symbol: &str) -> Option<usize> {
        self.schema.iter().position(|m| m.symbol == symbol)
    }

    pub fn require_sensor(&self, symbol: &str) -> Result<usize, DatasetError> {
        self.sensor_index(symbol)
            .ok_or_else(|| DatasetError::UnknownSensor(symbol.to_string()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Hash of the ordered sensor symbols.
    pub fn fingerprint(&self) -> u64 {
        crate::rng::fingerprint(&self.symbols())
    }

    /// New dataset holding only the given columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: indices.iter().map(|&j| self.schema[j].clone()).collect(),
            columns: indices.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }

    /// Columns looked up by symbol, in the given order.
    pub fn select_sensors<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Dataset, DatasetError> {
        let indices = symbols
            .iter()
            .map(|s| self.require_sensor(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_columns(&indices))
    }

    /// New dataset holding only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Copy with one column swapped for `values`.
    pub fn with_column(&self, index: usize, values: Vec<f64>) -> Result<Dataset, DatasetError> {
        if values.len() != self.n_rows() {
            return Err(DatasetError::ShapeMismatch(format!(
                "replacement column has {} rows, dataset has {}",
                values.len(),
                self.n_rows()
            )));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite {
                row,
                sensor: self.schema[index].symbol.clone(),
            });
        }
        let mut out = self.clone();
        out.columns[index] = values;
        Ok(out)
    }
}
