//! CSV reading and writing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset};
use crate::scalar::Scalar;

pub const LABEL_COLUMN: &str = "label";

/// Which columns of a CSV file play which role. Every column that is not the
/// label and not dropped is a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "default_label")]
    pub label_column: Option<String>,
    /// Fail if the label column is absent.
    #[serde(default)]
    pub require_label: bool,
    #[serde(default)]
    pub drop_columns: Vec<String>,
}

fn default_label() -> Option<String> {
    Some(LABEL_COLUMN.to_string())
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: default_label(),
            require_label: false,
            drop_columns: Vec::new(),
        }
    }
}

impl CsvSchema {
    pub fn labeled() -> Self {
        Self {
            require_label: true,
            ..Self::default()
        }
    }
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset<T>> {
    read_csv(File::open(path)?, schema)
}

/// Parses CSV with a header row. Parse errors report the zero-based data row
/// and column.
pub fn read_csv<T: Scalar, R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    for dropped in &schema.drop_columns {
        if !header.contains(dropped) {
            return Err(Error::MissingColumn(dropped.clone()));
        }
    }
    let label_idx = match &schema.label_column {
        Some(name) => {
            let idx = header.iter().position(|h| h == name);
            if idx.is_none() && schema.require_label {
                return Err(Error::MissingColumn(name.clone()));
            }
            idx
        }
        None if schema.require_label => return Err(Error::MissingColumn(LABEL_COLUMN.into())),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&i| Some(i) != label_idx && !schema.drop_columns.contains(&header[i]))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for &col in &feature_cols {
            let cell = &record[col];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col,
                message: format!("{:?} in column {:?} is not a number", cell, header[col]),
            })?;
            flat.push(T::lit(v));
        }
        if let Some(li) = label_idx {
            let cell = &record[li];
            let label = match cell {
                "0" | "0.0" => 0,
                "1" | "1.0" => 1,
                other => {
                    return Err(Error::LabelDomain {
                        row,
                        value: other.to_string(),
                    })
                }
            };
            labels.push(label);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let features = Array2::from_shape_vec((n, feature_cols.len()), flat).map_err(|_| Error::EmptyDataset)?;
    let names = feature_cols.iter().map(|&i| header[i].clone()).collect();
    validate_dataset(features, label_idx.map(|_| labels))?.with_feature_names(names)
}

pub fn write_csv<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(data, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Writes a header row and one row per sample; values use the shortest
/// representation that parses back to the same number.
pub fn write_csv_to<T: Scalar, W: Write>(data: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Necessary).from_writer(writer);
    let mut header: Vec<String> = data.feature_names().to_vec();
    if data.labels().is_some() {
        header.push(LABEL_COLUMN.into());
    }
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..data.n() {
        record.clear();
        record.extend(data.row(r).iter().map(|v| v.to_string()));
        if let Some(l) = data.labels() {
            record.push(l[r].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
