//! CSV ingestion with a small schema descriptor.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ColumnKind, ColumnMeta, Dataset, Split};
use crate::error::{Error, Result};

/// Reference to a column by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

/// Loader schema: which column is the label, which columns are categorical,
/// and the file dialect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub label: ColumnRef,
    #[serde(default)]
    pub categorical: Vec<ColumnRef>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Field delimiter; defaults to a comma. Single-byte characters only.
    #[serde(default)]
    pub delimiter: Option<char>,
}

fn default_true() -> bool {
    true
}

impl Schema {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter {
            None => Ok(b','),
            Some(c) if c.is_ascii() => Ok(c as u8),
            Some(c) => Err(Error::InvalidArgument(format!(
                "delimiter {c:?} is not a single-byte character"
            ))),
        }
    }
}

struct RawTable {
    headers: Vec<String>,
    /// Row-major cells, one Vec per row.
    rows: Vec<Vec<String>>,
    /// 1-based line number per row for diagnostics.
    lines: Vec<usize>,
}

fn read_table(path: &Path, schema: &Schema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter_byte()?)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = if schema.has_header {
        reader.headers()?.iter().map(|s| s.to_string()).collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut width: Option<usize> = if headers.is_empty() { None } else { Some(headers.len()) };
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 1);
        let cells: Vec<String> = record.iter().map(|s| s.to_string()).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if cells.len() != w => {
                return Err(Error::CsvParse {
                    line,
                    message: format!("expected {w} fields, found {}", cells.len()),
                })
            }
            _ => {}
        }
        rows.push(cells);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let width = width.unwrap();
    let headers = if headers.is_empty() {
        (0..width).map(|i| format!("f{i}")).collect()
    } else {
        headers
    };
    Ok(RawTable { headers, rows, lines })
}

fn resolve_column(headers: &[String], col: &ColumnRef, context: &str) -> Result<usize> {
    match col {
        ColumnRef::Index(i) => {
            if *i < headers.len() {
                Ok(*i)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{context}: column index {i} out of range ({} columns)",
                    headers.len()
                )))
            }
        }
        ColumnRef::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("{context}: no column named `{name}`"))),
    }
}

/// Loads one CSV file as a typed dataset. Every row starts in the training
/// split; use [`super::split`] or [`load_csv_pair`] to assign a test split.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let table = read_table(path, schema)?;
    build_dataset(vec![(table, Split::Train)], schema)
}

/// Loads a dataset with a provided train/test split: one file per split.
pub fn load_csv_pair(train: &Path, test: &Path, schema: &Schema) -> Result<Dataset> {
    let train_table = read_table(train, schema)?;
    let test_table = read_table(test, schema)?;
    if train_table.headers != test_table.headers {
        return Err(Error::InvalidArgument(
            "train and test files have different columns".into(),
        ));
    }
    build_dataset(
        vec![(train_table, Split::Train), (test_table, Split::Test)],
        schema,
    )
}

fn build_dataset(tables: Vec<(RawTable, Split)>, schema: &Schema) -> Result<Dataset> {
    let headers = tables[0].0.headers.clone();
    let label_idx = resolve_column(&headers, &schema.label, "label")?;
    let mut categorical_idx = BTreeSet::new();
    for col in &schema.categorical {
        let idx = resolve_column(&headers, col, "categorical column")?;
        if idx == label_idx {
            return Err(Error::InvalidArgument(
                "label column cannot also be a categorical feature".into(),
            ));
        }
        categorical_idx.insert(idx);
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();

    // Collect label and categorical vocabularies over all rows (the class
    // set is global; the encoding vocabulary is re-derived from the train
    // split at encoding time).
    let mut label_values = BTreeSet::new();
    let mut cat_values: Vec<BTreeSet<String>> = vec![BTreeSet::new(); headers.len()];
    for (table, _) in &tables {
        for (row, &line) in table.rows.iter().zip(&table.lines) {
            let label = &row[label_idx];
            if label.is_empty() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("empty label cell in column `{}`", headers[label_idx]),
                });
            }
            label_values.insert(label.clone());
            for &c in &categorical_idx {
                cat_values[c].insert(row[c].clone());
            }
        }
    }
    let label_names = sort_numeric_aware(label_values);
    let cat_vocab: Vec<Vec<String>> = cat_values
        .into_iter()
        .map(|set| sort_numeric_aware(set))
        .collect();

    let n_rows: usize = tables.iter().map(|(t, _)| t.rows.len()).sum();
    let mut features = Array2::zeros((n_rows, feature_cols.len()));
    let mut labels = Vec::with_capacity(n_rows);
    let mut split = Vec::with_capacity(n_rows);
    let mut r = 0;
    for (table, table_split) in &tables {
        for (row, &line) in table.rows.iter().zip(&table.lines) {
            for (fj, &c) in feature_cols.iter().enumerate() {
                let cell = &row[c];
                let value = if categorical_idx.contains(&c) {
                    cat_vocab[c]
                        .iter()
                        .position(|v| v == cell)
                        .expect("category collected above") as f64
                } else {
                    cell.parse::<f64>().map_err(|_| Error::CsvParse {
                        line,
                        message: format!(
                            "column `{}`: cannot parse `{cell}` as a number",
                            headers[c]
                        ),
                    })?
                };
                if !value.is_finite() {
                    return Err(Error::CsvParse {
                        line,
                        message: format!("column `{}`: non-finite value", headers[c]),
                    });
                }
                features[[r, fj]] = value;
            }
            let label = &row[label_idx];
            labels.push(
                label_names
                    .iter()
                    .position(|v| v == label)
                    .expect("label collected above"),
            );
            split.push(*table_split);
            r += 1;
        }
    }

    let columns: Vec<ColumnMeta> = feature_cols
        .iter()
        .map(|&c| ColumnMeta {
            name: headers[c].clone(),
            kind: if categorical_idx.contains(&c) {
                ColumnKind::Categorical {
                    categories: cat_vocab[c].clone(),
                }
            } else {
                ColumnKind::Continuous
            },
            norm: None,
            smoothing_std: None,
        })
        .collect();

    let n_classes = label_names.len();
    Dataset::new(features, labels, n_classes, label_names, columns, split)
}

/// Sorts values numerically when every value parses as a number (so labels
/// like {1..5, 7} map to contiguous indices in numeric order), otherwise
/// lexicographically.
fn sort_numeric_aware(values: BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = values.into_iter().collect();
    let numeric: Option<Vec<f64>> = out.iter().map(|v| v.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(out).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite labels"));
        out = pairs.into_iter().map(|(_, v)| v).collect();
    }
    out
}
