//! CSV ingestion and standardization.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

/// Response vector and design matrix read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub response: String,
    /// Covariate names in file order.
    pub covariates: Vec<String>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub standardized: bool,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(Error::Data(format!("row {row}, column '{column}': missing value")));
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!("row {row}, column '{column}': non-numeric value '{t}'"))),
    }
}

/// Reads a CSV with a header row. The response column becomes `y` and every
/// other column, in file order, a column of `X`. Rows are numbered from 1
/// for the first data row.
///
/// With `standardize`, columns of `X` are centered and scaled to unit sample
/// variance and `y` is centered.
pub fn load_dataset(path: &Path, response: &str, standardize: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Data(format!("response column '{response}' not found in {}", path.display())))?;
    let covariates: Vec<String> =
        headers.iter().enumerate().filter(|(i, _)| *i != resp_idx).map(|(_, h)| h.clone()).collect();
    if covariates.is_empty() {
        return Err(Error::Data("no covariate columns".into()));
    }

    let mut y = Vec::new();
    let mut values = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!("row {row}: expected {} fields, found {}", headers.len(), record.len())));
        }
        for (i, cell) in record.iter().enumerate() {
            let v = parse_cell(cell, row, &headers[i])?;
            if i == resp_idx {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let m = y.len();
    let n = covariates.len();
    let mut y = DVector::from_vec(y);
    let mut x = DMatrix::from_row_slice(m, n, &values);
    if standardize {
        if m < 2 {
            return Err(Error::Data("standardization needs at least 2 rows".into()));
        }
        for (j, name) in covariates.iter().enumerate() {
            let mut col = x.column_mut(j);
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let var = col.norm_squared() / (m as f64 - 1.0);
            if !(var > 0.0) {
                return Err(Error::Data(format!("column '{name}' has zero variance")));
            }
            col /= var.sqrt();
        }
        let mean = y.mean();
        y.add_scalar_mut(-mean);
    }

    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    Ok(Dataset { name, response: response.to_string(), covariates, y, x, standardized: standardize })
}

/// Writes `y` and `X` as a CSV with the response in the first column.
pub fn write_dataset_csv(path: &Path, response: &str, covariates: &[String], y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let mut header = vec![response.to_string()];
    header.extend(covariates.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..y.len() {
        let mut rec = vec![format!("{}", y[i])];
        rec.extend((0..x.ncols()).map(|j| format!("{}", x[(i, j)])));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
