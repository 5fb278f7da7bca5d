use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{lookup_installed, CellError, ClassId, Dataset, DatasetError, SensorMeta};

/// Label column name; must be the last header field.
pub const LABEL_COLUMN: &str = "class";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaPolicy {
    /// Every sensor column must be one of the installed-sensor symbols.
    Strict,
    /// Any unique names; unknown symbols become temperature sensors.
    #[default]
    Infer,
}

pub fn load_dataset(path: impl AsRef<Path>, policy: SchemaPolicy) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::FileNotFound(path.to_path_buf()),
        _ => DatasetError::Io(e),
    })?;
    read_dataset(file, policy)
}

/// Parses the dataset CSV format from any reader.
///
/// Bad cells are collected across the whole file and reported together.
pub fn read_dataset<R: Read>(reader: R, policy: SchemaPolicy) -> Result<Dataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    let schema = schema_from_header(&header, policy)?;
    let n_sensors = schema.len();

    let mut columns = vec![Vec::new(); n_sensors];
    let mut labels = Vec::new();
    let mut errors = Vec::new();

    for (row, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != n_sensors + 1 {
            errors.push(CellError {
                row,
                column: if record.len() < n_sensors + 1 {
                    header.get(record.len()).cloned().unwrap_or_default()
                } else {
                    LABEL_COLUMN.to_string()
                },
                reason: format!("expected {} cells, found {}", n_sensors + 1, record.len()),
            });
            continue;
        }
        let mut values = Vec::with_capacity(n_sensors);
        let mut row_ok = true;
        for (j, cell) in record.iter().take(n_sensors).enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    row_ok = false;
                    errors.push(CellError {
                        row,
                        column: header[j].clone(),
                        reason: if cell.is_empty() {
                            "missing value".to_string()
                        } else {
                            format!("not a finite number: {cell:?}")
                        },
                    });
                }
            }
        }
        let label_cell = &record[n_sensors];
        let label = match label_cell.parse::<ClassId>() {
            Ok(l) => Some(l),
            Err(_) => {
                errors.push(CellError {
                    row,
                    column: LABEL_COLUMN.to_string(),
                    reason: format!("not a class id: {label_cell:?}"),
                });
                None
            }
        };
        if let (true, Some(label)) = (row_ok, label) {
            for (column, v) in columns.iter_mut().zip(values) {
                column.push(v);
            }
            labels.push(label);
        }
    }

    if !errors.is_empty() {
        return Err(DatasetError::MalformedRow(errors));
    }
    if labels.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    Dataset::new(schema, columns, labels, n_classes)
}

fn schema_from_header(header: &[String], policy: SchemaPolicy) -> Result<Vec<SensorMeta>, DatasetError> {
    match header.last() {
        Some(last) if last == LABEL_COLUMN => {}
        _ => {
            return Err(DatasetError::SchemaMismatch(format!(
                "last column must be named {LABEL_COLUMN:?}"
            )))
        }
    }
    let sensors = &header[..header.len() - 1];
    if sensors.is_empty() {
        return Err(DatasetError::SchemaMismatch("no sensor columns".to_string()));
    }
    let mut seen = HashSet::new();
    sensors
        .iter()
        .map(|symbol| {
            if symbol.is_empty() || symbol == LABEL_COLUMN {
                return Err(DatasetError::SchemaMismatch(format!(
                    "invalid sensor column name {symbol:?}"
                )));
            }
            if !seen.insert(symbol.as_str()) {
                return Err(DatasetError::SchemaMismatch(format!("duplicate column {symbol:?}")));
            }
            match (lookup_installed(symbol), policy) {
                (Some(meta), _) => Ok(meta),
                (None, SchemaPolicy::Infer) => Ok(SensorMeta::inferred(symbol.clone())),
                (None, SchemaPolicy::Strict) => Err(DatasetError::SchemaMismatch(format!(
                    "unknown sensor symbol {symbol:?}"
                ))),
            }
        })
        .collect()
}

/// Writes the dataset CSV format. Values use the shortest representation
/// that parses back to the identical `f64`.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut out = csv::WriterBuilder::new().from_writer(writer);
    let mut header = dataset.symbols();
    header.push(LABEL_COLUMN.to_string());
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..dataset.n_rows() {
        record.clear();
        record.extend(dataset.columns().iter().map(|c| format!("{:?}", c[i])));
        record.push(dataset.labels()[i].to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_file(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf)?;
    crate::io::write_atomic(path.as_ref(), &buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{installed_sensors, SensorKind};
    use proptest::prelude::*;

    fn parse(text: &str, policy: SchemaPolicy) -> Result<Dataset, DatasetError> {
        read_dataset(text.as_bytes(), policy)
    }

    #[test]
    fn parses_small_file() {
        let d = parse("T_FI,T_C,class\n1.5,2,0\n3,4e1,1\n-5,6.25,2\n", SchemaPolicy::Strict).unwrap();
        assert_eq!(d.n_sensors(), 2);
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.column(1), &[2.0, 40.0, 6.25]);
        assert_eq!(d.labels(), &[0, 1, 2]);
    }

    #[test]
    fn header_without_class_is_rejected() {
        let err = parse("T_FI,T_C\n1,2\n", SchemaPolicy::Infer).unwrap_err();
        assert!(matches!(err, DatasetError::SchemaMismatch(_)));
    }

    #[test]
    fn strict_rejects_unknown_symbols_infer_accepts() {
        let text = "T_FI,flux,class\n1,2,0\n";
        assert!(matches!(
            parse(text, SchemaPolicy::Strict),
            Err(DatasetError::SchemaMismatch(_))
        ));
        let d = parse(text, SchemaPolicy::Infer).unwrap();
        assert_eq!(d.schema()[1].kind, SensorKind::Temperature);
        assert_eq!(d.schema()[0].description, "Condenser inlet air temperature");
    }

    #[test]
    fn malformed_cells_are_listed_by_row_and_column() {
        let err = parse("a,b,class\n1,2,0\n1,,0\nx,2,1\n1,2\n1,2,z\n", SchemaPolicy::Infer).unwrap_err();
        let DatasetError::MalformedRow(cells) = err else {
            panic!("expected MalformedRow")
        };
        let found: Vec<(usize, &str)> = cells.iter().map(|c| (c.row, c.column.as_str())).collect();
        assert_eq!(found, vec![(1, "b"), (2, "a"), (3, "class"), (4, "class")]);
    }

    #[test]
    fn empty_and_missing_files() {
        assert!(matches!(
            parse("a,class\n", SchemaPolicy::Infer),
            Err(DatasetError::EmptyDataset)
        ));
        assert!(matches!(
            load_dataset("/nonexistent/data.csv", SchemaPolicy::Infer),
            Err(DatasetError::FileNotFound(_))
        ));
    }

    #[test]
    fn full_installed_schema_loads_strictly() {
        let sensors = installed_sensors();
        let mut text: String = sensors.iter().map(|s| format!("{},", s.symbol)).collect();
        text.push_str("class\n");
        for label in 0..3 {
            let row: Vec<String> = (0..40).map(|j| format!("{}", j as f64 * 0.5 + label as f64)).collect();
            text.push_str(&row.join(","));
            text.push_str(&format!(",{label}\n"));
        }
        let d = parse(&text, SchemaPolicy::Strict).unwrap();
        assert_eq!(d.n_sensors(), 40);
        assert_eq!(d.schema(), sensors.as_slice());
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            rows in proptest::collection::vec(
                (proptest::collection::vec(-1e12f64..1e12, 3), 0u32..5), 1..20)
        ) {
            let schema = vec![
                SensorMeta::inferred("s0"),
                SensorMeta::inferred("s1"),
                SensorMeta::inferred("s2"),
            ];
            let values: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.clone()).collect();
            let labels: Vec<ClassId> = rows.iter().map(|(_, l)| *l).collect();
            let d = Dataset::from_rows(schema, &values, labels).unwrap();
            let mut buf = Vec::new();
            write_csv(&d, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice(), SchemaPolicy::Infer).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
