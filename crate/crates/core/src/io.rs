use std::fmt;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::model::Dataset;

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
}

impl ResponseColumn {
    /// A bare non-negative integer is an index; anything else is a header name.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.trim().to_string()),
        }
    }
}

impl fmt::Display for ResponseColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseColumn::Name(n) => f.write_str(n),
            ResponseColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

pub fn load_csv<F: Float>(path: impl AsRef<Path>, response: &ResponseColumn, has_header: bool) -> Result<Dataset<F>> {
    let file = std::fs::File::open(path)?;
    read_csv(file, response, has_header)
}

type Table = (Option<Vec<String>>, Vec<Vec<f64>>, usize);

/// Parses a rectangular numeric CSV. Row numbers in errors count data rows
/// from 1; columns count from 0.
fn read_table<R: Read>(reader: R, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = headers.as_ref().map(Vec::len);
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    column: record.len().min(w),
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(column, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column,
                        message: format!("`{cell}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    let width = width.unwrap_or(0);
    if rows.is_empty() {
        return Err(Error::Dimension("csv has no data rows".into()));
    }
    Ok((headers, rows, width))
}

/// Reads a dataset, taking `response` as `y` and every other column as `X`.
pub fn read_csv<F: Float, R: Read>(reader: R, response: &ResponseColumn, has_header: bool) -> Result<Dataset<F>> {
    let (headers, rows, width) = read_table(reader, has_header)?;
    let available = || match &headers {
        Some(h) => h.join(", "),
        None => format!("indices 0..{width}"),
    };
    let target = match (response, &headers) {
        (ResponseColumn::Name(name), Some(h)) => h.iter().position(|c| c == name),
        (ResponseColumn::Index(i), Some(h)) => h
            .iter()
            .position(|c| c == &i.to_string())
            .or(Some(*i).filter(|i| *i < width)),
        (ResponseColumn::Index(i), None) => Some(*i).filter(|i| *i < width),
        (ResponseColumn::Name(_), None) => None,
    }
    .ok_or_else(|| Error::MissingResponse {
        requested: response.to_string(),
        available: available(),
    })?;
    if width < 2 {
        return Err(Error::Dimension("need a response and at least one covariate column".into()));
    }

    let n = rows.len();
    let p = width - 1;
    let mut x = Array2::<F>::zeros((n, p));
    let mut y = Array1::<F>::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut j = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == target {
                y[i] = F::cast(v);
            } else {
                x[[i, j]] = F::cast(v);
                j += 1;
            }
        }
    }
    Dataset::new(x.view(), y)
}

/// Reads a bare numeric matrix with every column kept.
pub fn read_matrix<F: Float, R: Read>(reader: R, has_header: bool) -> Result<Array2<F>> {
    let (_, rows, width) = read_table(reader, has_header)?;
    Ok(Array2::from_shape_fn((rows.len(), width), |(i, j)| F::cast(rows[i][j])))
}

pub fn load_matrix<F: Float>(path: impl AsRef<Path>, has_header: bool) -> Result<Array2<F>> {
    let file = std::fs::File::open(path)?;
    read_matrix(file, has_header)
}
