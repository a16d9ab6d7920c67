use std::cmp::Ordering;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::write_atomic;
use crate::error::{invalid, mismatch, Error, Result};

/// Shortest text that parses back to exactly `v`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// A CSV file as header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedCsv(format!("missing column `{name}`; header is {:?}", self.header)))
    }

    /// Parses one cell; `row` is 1-based over data rows.
    fn number(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.rows[row][col].trim();
        cell.parse::<f64>().map_err(|_| {
            Error::MalformedCsv(format!(
                "non-numeric value `{cell}` at row {}, column `{}`",
                row + 1,
                self.header[col]
            ))
        })
    }

    pub fn numeric_columns(&self, cols: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.rows.len(), cols.len()));
        for r in 0..self.rows.len() {
            for (j, &c) in cols.iter().enumerate() {
                out[[r, j]] = self.number(r, c)?;
            }
        }
        Ok(out)
    }
}

/// Reads a headed CSV, rejecting ragged rows.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::MalformedCsv(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::MalformedCsv(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                rec.len(),
                header.len()
            )));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedCsv(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a CSV whose cells are all numeric.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let table = read_table(path)?;
    let cols: Vec<usize> = (0..table.header.len()).collect();
    let data = table.numeric_columns(&cols)?;
    Ok((table.header, data))
}

/// Writes rows of preformatted cells atomically.
pub fn write_csv_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::MalformedCsv(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(mismatch(format!("row of {} cells for {} columns", row.len(), header.len())));
        }
        w.write_record(row).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::MalformedCsv(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn write_numeric_csv(path: &Path, header: &[String], data: ArrayView2<f64>) -> Result<()> {
    if data.ncols() != header.len() {
        return Err(mismatch(format!("{} columns of data for {} header names", data.ncols(), header.len())));
    }
    let rows: Vec<Vec<String>> = data.rows().into_iter().map(|r| r.iter().map(|&v| format_float(v)).collect()).collect();
    write_csv_rows(path, header, &rows)
}

/// Sorted mapping between label text and category index.
///
/// Labels sort numerically when every label parses as a number, otherwise
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap {
    classes: Vec<String>,
}

impl CategoryMap {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut classes: Vec<String> = values.into_iter().map(|v| v.trim().to_string()).collect();
        classes.sort();
        classes.dedup();
        let numeric: Option<Vec<f64>> = classes.iter().map(|c| c.parse::<f64>().ok()).collect();
        if let Some(nums) = numeric {
            let mut paired: Vec<(f64, String)> = nums.into_iter().zip(classes).collect();
            paired.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(&b.1)));
            classes = paired.into_iter().map(|(_, c)| c).collect();
        }
        Self { classes }
    }

    pub fn from_classes(classes: Vec<String>) -> Self {
        Self { classes }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.classes.iter().position(|c| c == label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }
}

/// Response column(s) of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Continuous(Array2<f64>),
    Categorical { labels: Vec<usize>, mapping: CategoryMap },
}

/// Predictors plus a named response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub predictor_names: Vec<String>,
    pub x: Array2<f64>,
    pub target_names: Vec<String>,
    pub target: Target,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn continuous_target(&self) -> Result<&Array2<f64>> {
        match &self.target {
            Target::Continuous(y) => Ok(y),
            Target::Categorical { .. } => Err(invalid("expected a continuous target")),
        }
    }
}

/// Which columns form the response and how to read it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub target_cols: Vec<String>,
    /// Map the (single) target column to category indices.
    pub categorical: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { target_cols: vec!["y".into()], categorical: false }
    }
}

/// Loads a dataset; every non-target column is a numeric predictor.
pub fn load_dataset(path: &Path, spec: &DatasetSpec) -> Result<Dataset> {
    let table = read_table(path)?;
    if spec.target_cols.is_empty() {
        return Err(invalid("at least one target column is required"));
    }
    if spec.categorical && spec.target_cols.len() != 1 {
        return Err(invalid("a categorical target must be a single column"));
    }
    let target_idx: Vec<usize> = spec.target_cols.iter().map(|c| table.column_index(c)).collect::<Result<_>>()?;
    let pred_idx: Vec<usize> = (0..table.header.len()).filter(|i| !target_idx.contains(i)).collect();
    let x = table.numeric_columns(&pred_idx)?;
    let target = if spec.categorical {
        let c = target_idx[0];
        let mapping = CategoryMap::fit(table.rows.iter().map(|r| r[c].as_str()));
        let labels = table.rows.iter().map(|r| mapping.index(&r[c]).expect("fitted on these rows")).collect();
        Target::Categorical { labels, mapping }
    } else {
        Target::Continuous(table.numeric_columns(&target_idx)?)
    };
    Ok(Dataset {
        predictor_names: pred_idx.iter().map(|&i| table.header[i].clone()).collect(),
        x,
        target_names: spec.target_cols.clone(),
        target,
    })
}

/// Writes predictors followed by the target column(s).
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut header = data.predictor_names.clone();
    header.extend(data.target_names.iter().cloned());
    let mut rows = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x.row(i).iter().map(|&v| format_float(v)).collect();
        match &data.target {
            Target::Continuous(y) => row.extend(y.row(i).iter().map(|&v| format_float(v))),
            Target::Categorical { labels, mapping } => {
                row.push(mapping.label(labels[i]).ok_or_else(|| invalid("label outside the mapping"))?.to_string())
            }
        }
        rows.push(row);
    }
    write_csv_rows(path, &header, &rows)
}
