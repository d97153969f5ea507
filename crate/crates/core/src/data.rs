//! Datasets, CSV ingestion and column standardization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgamError};
use crate::family::Family;

/// Columns whose population sd falls below this (relative to their magnitude)
/// are treated as constant.
pub const ZERO_VARIANCE_TOL: f64 = 1e-10;

/// Feature matrix, response and family.
///
/// Invariants checked at construction: `n >= 2`, `p >= 1`, every feature value
/// finite, and every response value inside the family's support.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    family: Family,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, family: Family) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 {
            return Err(RgamError::InvalidInput(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if p < 1 {
            return Err(RgamError::InvalidInput("need at least one feature column".into()));
        }
        if y.len() != n {
            return Err(RgamError::InvalidInput(format!(
                "response has {} entries but x has {n} rows",
                y.len()
            )));
        }
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(RgamError::InvalidInput(format!(
                "non-finite feature value {v} at row {}, column {}",
                i + 1,
                j + 1
            )));
        }
        family.validate_response(y.as_slice().expect("owned vector is contiguous"))?;
        Ok(Self {
            x,
            y,
            family,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(RgamError::DimensionMismatch {
                expected: self.p(),
                found: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn y_slice(&self) -> &[f64] {
        self.y.as_slice().expect("owned vector is contiguous")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Rows `rows` of this dataset, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select(Axis(0), rows);
        let y = self.y.select(Axis(0), rows);
        let mut d = Dataset::new(x, y, self.family)?;
        d.column_names = self.column_names.clone();
        Ok(d)
    }

    /// Same features with a different response (used by Monte Carlo resampling).
    pub fn with_response(&self, y: Array1<f64>) -> Result<Dataset> {
        let mut d = Dataset::new(self.x.clone(), y, self.family)?;
        d.column_names = self.column_names.clone();
        Ok(d)
    }
}

/// Identifies a CSV column by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

impl From<usize> for ColumnRef {
    fn from(i: usize) -> Self {
        ColumnRef::Index(i)
    }
}

impl ColumnRef {
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnRef::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RgamError::MissingColumn(name.clone())),
            ColumnRef::Index(i) if *i < headers.len() => Ok(*i),
            ColumnRef::Index(i) => Err(RgamError::MissingColumn(format!("#{i}"))),
        }
    }
}

/// Numeric table read from CSV: header plus row-major values.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub values: Array2<f64>,
}

/// Reads a numeric CSV with one header row. Every cell must parse as a finite
/// number; the first offending cell is reported by 1-based data row and header.
pub fn read_numeric_csv(path: impl AsRef<Path>) -> Result<NumericTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| RgamError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let ncol = headers.len();
    let mut flat = Vec::new();
    let mut nrow = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != ncol {
            return Err(RgamError::InvalidInput(format!(
                "row {} has {} fields, header has {ncol}",
                row + 1,
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => flat.push(v),
                _ => {
                    return Err(RgamError::Parse {
                        row: row + 1,
                        column: headers[j].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        nrow += 1;
    }
    let values = Array2::from_shape_vec((nrow, ncol), flat)
        .map_err(|e| RgamError::InvalidInput(e.to_string()))?;
    Ok(NumericTable { headers, values })
}

/// Loads a dataset from CSV, removing the response column from the features.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_column: impl Into<ColumnRef>,
    family: Family,
) -> Result<Dataset> {
    let table = read_numeric_csv(path)?;
    let target = response_column.into().resolve(&table.headers)?;
    let keep: Vec<usize> = (0..table.headers.len()).filter(|&j| j != target).collect();
    let x = table.values.select(Axis(1), &keep);
    let y = table.values.column(target).to_owned();
    let names = keep.iter().map(|&j| table.headers[j].clone()).collect();
    Dataset::new(x, y, family)?.with_column_names(names)
}

/// Formats a double with 17 significant digits, enough to round-trip exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset as CSV, features first and the response last.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, response_name: &str) -> Result<()> {
    let names: Vec<String> = match d.column_names() {
        Some(n) => n.to_vec(),
        None => (1..=d.p()).map(|j| format!("x{j}")).collect(),
    };
    let mut header = names;
    header.push(response_name.to_string());
    let mut table = Array2::zeros((d.n(), d.p() + 1));
    table.slice_mut(ndarray::s![.., ..d.p()]).assign(&d.x());
    table.column_mut(d.p()).assign(&d.y());
    write_table(path, &header, table.view())
}

/// Writes a header and numeric rows with 17 significant digits.
pub fn write_table(path: impl AsRef<Path>, header: &[String], rows: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    let bytes = w.into_inner().map_err(|e| RgamError::InvalidInput(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RgamError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| RgamError::io(path, e))?;
    tmp.persist(path).map_err(|e| RgamError::io(path, e.error))?;
    Ok(())
}

/// Population standard deviation (divisor `n`). A constant vector gives 0.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (ss / n).sqrt()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Column centering and scaling, plus the response mean for gaussian data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub zero_variance: Vec<bool>,
    pub y_mean: Option<f64>,
}

impl Standardization {
    /// Column statistics of `x`; `y_mean` is left empty.
    pub fn from_columns(x: ArrayView2<f64>) -> Self {
        let mut column_means = Vec::with_capacity(x.ncols());
        let mut column_sds = Vec::with_capacity(x.ncols());
        let mut zero_variance = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let v = col.to_vec();
            let m = mean(&v);
            let sd = sample_sd(&v);
            column_means.push(m);
            column_sds.push(sd);
            zero_variance.push(sd <= ZERO_VARIANCE_TOL * (1.0 + m.abs()));
        }
        Self {
            column_means,
            column_sds,
            zero_variance,
            y_mean: None,
        }
    }

    pub fn p(&self) -> usize {
        self.column_means.len()
    }

    /// Standardizes new rows; zero-variance columns map to 0.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.zero_variance[j] {
                col.fill(0.0);
            } else {
                let (m, s) = (self.column_means[j], self.column_sds[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }

    /// Maps standardized rows back to the original scale.
    pub fn invert(&self, x_std: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x_std.ncols())?;
        let mut out = x_std.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.column_means[j], self.column_sds[j]);
            if self.zero_variance[j] {
                col.fill(m);
            } else {
                col.mapv_inplace(|v| v * s + m);
            }
        }
        Ok(out)
    }

    /// Converts coefficients fitted on standardized columns (and a centered
    /// response, for gaussian data) to the original scale.
    pub fn coefficients_to_original(&self, beta_std: &[f64], intercept_std: f64) -> (Vec<f64>, f64) {
        let mut intercept = intercept_std + self.y_mean.unwrap_or(0.0);
        let beta: Vec<f64> = beta_std
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if self.zero_variance[j] {
                    0.0
                } else {
                    let orig = b / self.column_sds[j];
                    intercept -= orig * self.column_means[j];
                    orig
                }
            })
            .collect();
        (beta, intercept)
    }

    /// Inverse of [`Standardization::coefficients_to_original`].
    pub fn coefficients_to_standardized(&self, beta: &[f64], intercept: f64) -> (Vec<f64>, f64) {
        let mut intercept_std = intercept - self.y_mean.unwrap_or(0.0);
        let beta_std = beta
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if self.zero_variance[j] {
                    0.0
                } else {
                    intercept_std += b * self.column_means[j];
                    b * self.column_sds[j]
                }
            })
            .collect();
        (beta_std, intercept_std)
    }

    fn check_width(&self, found: usize) -> Result<()> {
        if found == self.p() {
            Ok(())
        } else {
            Err(RgamError::DimensionMismatch {
                expected: self.p(),
                found,
            })
        }
    }
}

/// Centers and scales every column to mean 0 and population sd 1.
///
/// Zero-variance columns are flagged and returned as zeros. For gaussian data
/// the response mean is recorded so fitted values can be restored.
pub fn standardize(d: &Dataset) -> Result<(Array2<f64>, Standardization)> {
    let mut s = Standardization::from_columns(d.x());
    if s.zero_variance.iter().all(|&z| z) {
        return Err(RgamError::AllZeroVariance);
    }
    if d.family() == Family::Gaussian {
        s.y_mean = Some(mean(d.y_slice()));
    }
    let x = s.apply(d.x())?;
    Ok((x, s))
}
