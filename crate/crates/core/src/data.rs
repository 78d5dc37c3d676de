//! Datasets, CSV ingestion, standardization, splits, the default bin-width
//! heuristic and the synthetic generators used by the benchmarks.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HteError, Result};
use crate::rng::stream;

/// Noise level of both synthetic generators.
pub const SYNTHETIC_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(HteError::data("dataset is empty"));
        }
        if x.nrows() != y.len() {
            return Err(HteError::data(format!(
                "{} feature rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if let Some((i, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let d = x.ncols().max(1);
            return Err(HteError::data(format!(
                "non-finite feature at row {}, column {}",
                i / d,
                i % d
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(HteError::data(format!("non-finite target at row {i}")));
        }
        Ok(Dataset {
            x,
            y,
            feature_names: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Which CSV column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

/// Raw numeric table read from a CSV file.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn n_columns(&self) -> usize {
        self.header
            .as_ref()
            .map(|h| h.len())
            .or_else(|| self.rows.first().map(|r| r.len()))
            .unwrap_or(0)
    }

    pub fn column_index(&self, target: &TargetColumn) -> Result<usize> {
        match target {
            TargetColumn::Index(i) if *i < self.n_columns() => Ok(*i),
            TargetColumn::Index(i) => Err(HteError::data(format!(
                "target column index {i} out of range ({} columns)",
                self.n_columns()
            ))),
            TargetColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| HteError::data(format!("target column `{name}` not found"))),
        }
    }

    /// Splits into a dataset; `target = None` yields all-feature rows with zero targets.
    pub fn into_dataset(self, target: Option<usize>) -> Result<Dataset> {
        let n_cols = self.n_columns();
        let d = n_cols - usize::from(target.is_some());
        let n = self.rows.len();
        let mut x = Array2::<f64>::zeros((n, d));
        let mut y = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let mut j = 0;
            for (c, v) in row.iter().enumerate() {
                if Some(c) == target {
                    y[i] = *v;
                } else {
                    x[[i, j]] = *v;
                    j += 1;
                }
            }
        }
        let feature_names = self.header.map(|h| {
            h.into_iter()
                .enumerate()
                .filter(|(c, _)| Some(*c) != target)
                .map(|(_, name)| name)
                .collect()
        });
        let mut ds = Dataset::new(x, y)?;
        ds.feature_names = feature_names;
        Ok(ds)
    }
}

/// Reads a CSV of decimal numbers. Every cell must parse to a finite float.
pub fn read_numeric_csv(path: &Path, has_header: bool) -> Result<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HteError::data(format!("cannot open {}: {e}", path.display())))?;
    let header = if has_header {
        let h = reader
            .headers()
            .map_err(|e| HteError::data(format!("cannot read header: {e}")))?;
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let column_name = |c: usize| -> String {
        header
            .as_ref()
            .and_then(|h| h.get(c).cloned())
            .unwrap_or_else(|| c.to_string())
    };
    let first_row = if has_header { 2 } else { 1 };
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HteError::Csv {
            row: first_row + i,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(HteError::Csv {
                    row: first_row + i,
                    column: column_name(c),
                    message: format!("`{cell}` is not a finite number"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HteError::data(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(NumericTable { header, rows })
}

/// Loads a dataset, taking `target` as `y` and every other column as a feature.
pub fn load_csv(path: &Path, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    let table = read_numeric_csv(path, has_header)?;
    let t = table.column_index(target)?;
    if table.n_columns() < 2 {
        return Err(HteError::data(
            "need at least one feature column besides the target",
        ));
    }
    table.into_dataset(Some(t))
}

/// Writes a dataset as CSV with a header `x0..x{d-1},y` (or the stored feature names).
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HteError::data(e.to_string()))?;
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (0..ds.d()).map(|j| format!("x{j}")).collect(),
    };
    header.push("y".into());
    w.write_record(&header)
        .map_err(|e| HteError::data(e.to_string()))?;
    for (row, y) in ds.x.rows().into_iter().zip(&ds.y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec)
            .map_err(|e| HteError::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Column means and standard deviations; constant columns keep `std = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `(mean, std)` of the target when target scaling is on.
    pub target: Option<(f64, f64)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 1.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let std = var.sqrt();
    (
        mean,
        if std > 0.0 && std.is_finite() {
            std
        } else {
            1.0
        },
    )
}

impl Standardizer {
    /// Identity scaling for `d` features.
    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            target: None,
        }
    }

    pub fn fit(ds: &Dataset, features: bool, target: bool) -> Self {
        let n = ds.n();
        let (mean, std) = if features {
            ds.x.columns()
                .into_iter()
                .map(|c| mean_std(c.iter().copied(), n))
                .unzip()
        } else {
            (vec![0.0; ds.d()], vec![1.0; ds.d()])
        };
        Standardizer {
            mean,
            std,
            target: target.then(|| mean_std(ds.y.iter().copied(), n)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_x(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dim(), x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_x(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dim(), x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        match self.target {
            Some((m, s)) => y.iter().map(|v| (v - m) / s).collect(),
            None => y.to_vec(),
        }
    }

    pub fn inverse_y(&self, y: &[f64]) -> Vec<f64> {
        match self.target {
            Some((m, s)) => y.iter().map(|v| v * s + m).collect(),
            None => y.to_vec(),
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            x: self.transform_x(ds.x.view())?,
            y: self.transform_y(&ds.y),
            feature_names: ds.feature_names.clone(),
        })
    }
}

/// Default bin width `ĥ = 3.5·σ·n^{−1/(2+d)}` and its inverse `ŝ`, where
/// `σ = √(trace(V)/d)` and `V` is the sample covariance (divisor `n − 1`).
pub fn default_scale(x: ArrayView2<f64>) -> Result<(f64, f64)> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(HteError::data(format!(
            "default scale needs at least 2 rows, got {n}"
        )));
    }
    let trace: f64 = x
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n as f64;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
        })
        .sum();
    let sigma = (trace / d as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(HteError::data("degenerate scale: all points are identical"));
    }
    let h = 3.5 * sigma * (n as f64).powf(-1.0 / (2.0 + d as f64));
    Ok((h, 1.0 / h))
}

/// Noiseless regression function of the one-dimensional benchmark.
pub fn sin16(x: f64) -> f64 {
    (16.0 * x).sin()
}

/// Noiseless regression function of the three-dimensional benchmark.
pub fn counter3d(x: &[f64]) -> f64 {
    x.iter().map(|&v| 10.0 * v * (2.0 * v - 3.0).sin()).sum()
}

fn generate(n: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = stream(seed, &[]);
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for mut row in x.rows_mut() {
        for v in row.iter_mut() {
            *v = rng.random::<f64>();
        }
        let noise: f64 = rng.sample(StandardNormal);
        y.push(f(row.as_slice().expect("standard layout")) + SYNTHETIC_NOISE_STD * noise);
    }
    Dataset {
        x,
        y,
        feature_names: None,
    }
}

/// `Y = sin(16X) + ε`, `X ~ U[0,1]`, `ε ~ N(0, 0.1²)`.
pub fn gen_sin16(n: usize, seed: u64) -> Dataset {
    generate(n, 1, seed, |x| sin16(x[0]))
}

/// `Y = Σ 10·X_i·sin(2X_i − 3) + ε`, `X ~ U[0,1]³`, `ε ~ N(0, 0.1²)`.
pub fn gen_counter3d(n: usize, seed: u64) -> Dataset {
    generate(n, 3, seed, counter3d)
}

/// Row indices of a shuffled split with `⌈fraction·n⌉` rows on the first side.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HteError::config(
            "fraction",
            format!("must lie in (0, 1), got {fraction}"),
        ));
    }
    // Guard against products like 0.7·10 landing just above an integer.
    let first = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if first == 0 || first >= n {
        return Err(HteError::data(format!(
            "split of {n} rows at fraction {fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[]));
    let second = idx.split_off(first);
    Ok((idx, second))
}

pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(ds.n(), fraction, seed)?;
    Ok((ds.select(&a), ds.select(&b)))
}
