//! Datasets and CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// All-real table, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousDataset {
    n: usize,
    names: Vec<String>,
    values: Vec<f64>,
}

impl ContinuousDataset {
    /// `values` is column-major: column `j` occupies `values[j*n .. (j+1)*n]`.
    pub fn new(n: usize, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if values.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "{} values for a {n}x{d} table",
                values.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewRows { rows: n, min: 2 });
        }
        for (j, name) in names.iter().enumerate() {
            let col = &values[j * n..(j + 1) * n];
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericCell {
                    row,
                    column: name.clone(),
                    value: col[row].to_string(),
                });
            }
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::ConstantColumn {
                    column: name.clone(),
                });
            }
        }
        Ok(Self { n, names, values })
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.len() != names.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDataset("ragged columns".into()));
        }
        Self::new(n, names, columns.concat())
    }

    /// Column names `V1..VD`.
    pub fn default_names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("V{i}")).collect()
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n + row]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_vars()).map(|j| self.get(i, j)).collect()
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_vars());
        for j in 0..self.n_vars() {
            let col = self.column(j);
            values.extend(rows.iter().map(|&i| col[i]));
        }
        Self::new(rows.len(), self.names.clone(), values)
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        let values = cols.iter().flat_map(|&j| self.column(j).iter().copied()).collect();
        Self::new(self.n, names, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.names).map_err(|e| csv_err(path, e))?;
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Integer-coded categorical table, column-major. Codes of column `j` lie in
/// `0..levels[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDataset {
    n: usize,
    names: Vec<String>,
    levels: Vec<u32>,
    codes: Vec<u32>,
    labels: Option<Vec<Vec<String>>>,
}

impl CategoricalDataset {
    pub fn new(n: usize, names: Vec<String>, levels: Vec<u32>, codes: Vec<u32>) -> Result<Self> {
        let d = names.len();
        if levels.len() != d || codes.len() != n * d {
            return Err(Error::InvalidDataset("shape mismatch".into()));
        }
        if n < 2 {
            return Err(Error::TooFewRows { rows: n, min: 2 });
        }
        for j in 0..d {
            let col = &codes[j * n..(j + 1) * n];
            if levels[j] < 2 {
                return Err(Error::ConstantColumn {
                    column: names[j].clone(),
                });
            }
            if let Some(row) = col.iter().position(|&c| c >= levels[j]) {
                return Err(Error::InvalidDataset(format!(
                    "row {row}, column `{}`: code {} outside 0..{}",
                    names[j], col[row], levels[j]
                )));
            }
            if col.iter().copied().min() != Some(0) {
                return Err(Error::InvalidDataset(format!(
                    "column `{}`: codes must start from 0",
                    names[j]
                )));
            }
        }
        Ok(Self {
            n,
            names,
            levels,
            codes,
            labels: None,
        })
    }

    /// Level counts are inferred as `max code + 1`.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<u32>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.len() != names.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDataset("ragged columns".into()));
        }
        let levels = columns
            .iter()
            .map(|c| c.iter().copied().max().map_or(0, |m| m + 1))
            .collect();
        Self::new(n, names, levels, columns.concat())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[u32] {
        &self.codes[j * self.n..(j + 1) * self.n]
    }

    /// Original string for a code, when the data came from a labelled source.
    pub fn label(&self, col: usize, code: u32) -> Option<&str> {
        self.labels
            .as_ref()
            .and_then(|l| l[col].get(code as usize))
            .map(String::as_str)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.names).map_err(|e| csv_err(path, e))?;
        for i in 0..self.n {
            let row = (0..self.n_vars()).map(|j| {
                let code = self.column(j)[i];
                self.label(j, code)
                    .map_or_else(|| code.to_string(), str::to_string)
            });
            w.write_record(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Continuous(ContinuousDataset),
    Categorical(CategoricalDataset),
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        match self {
            Dataset::Continuous(d) => d.n_rows(),
            Dataset::Categorical(d) => d.n_rows(),
        }
    }

    pub fn n_vars(&self) -> usize {
        match self {
            Dataset::Continuous(d) => d.n_vars(),
            Dataset::Categorical(d) => d.n_vars(),
        }
    }

    pub fn names(&self) -> &[String] {
        match self {
            Dataset::Continuous(d) => d.names(),
            Dataset::Categorical(d) => d.names(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    Continuous,
    Categorical,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a headed, rectangular CSV file.
///
/// Categorical columns are coded `0..k` in order of first appearance and the
/// code-to-string mapping is kept on the dataset.
pub fn load_csv(path: &Path, mode: LoadMode) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    let d = names.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); d];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::MissingCell {
                    row,
                    column: names[j].clone(),
                });
            }
            cells[j].push(cell.to_string());
        }
    }
    let n = cells[0].len();
    match mode {
        LoadMode::Continuous => {
            let mut values = Vec::with_capacity(n * d);
            for (j, col) in cells.iter().enumerate() {
                for (row, cell) in col.iter().enumerate() {
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => values.push(v),
                        _ => {
                            return Err(Error::NonNumericCell {
                                row,
                                column: names[j].clone(),
                                value: cell.clone(),
                            })
                        }
                    }
                }
            }
            Ok(Dataset::Continuous(ContinuousDataset::new(n, names, values)?))
        }
        LoadMode::Categorical => {
            let mut codes = Vec::with_capacity(n * d);
            let mut levels = Vec::with_capacity(d);
            let mut labels = Vec::with_capacity(d);
            for col in &cells {
                let mut seen: HashMap<&str, u32> = HashMap::new();
                let mut order: Vec<String> = Vec::new();
                for cell in col {
                    let next = seen.len() as u32;
                    let code = *seen.entry(cell.as_str()).or_insert_with(|| {
                        order.push(cell.clone());
                        next
                    });
                    codes.push(code);
                }
                levels.push(order.len() as u32);
                labels.push(order);
            }
            let mut ds = CategoricalDataset::new(n, names, levels, codes)?;
            ds.labels = Some(labels);
            Ok(Dataset::Categorical(ds))
        }
    }
}
