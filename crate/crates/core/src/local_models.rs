//! Per-cell regressors: cell means for the naive estimator and clipped
//! Gaussian kernel ridge regression for the kernel estimator.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HteError, Result};
use crate::linalg::{gaussian_gram, gaussian_kernel, solve_spd, SpdSolveReport};
use crate::partition::CellId;

/// Truncates `t` to `[-m, m]`.
#[inline]
pub fn clip(t: f64, m: f64) -> f64 {
    t.max(-m).min(m)
}

/// Prediction used for query points that land in a cell without training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackRule {
    #[default]
    Zero,
    GlobalMean,
}

impl FallbackRule {
    pub fn value(self, y: &[f64]) -> f64 {
        match self {
            FallbackRule::Zero => 0.0,
            FallbackRule::GlobalMean if y.is_empty() => 0.0,
            FallbackRule::GlobalMean => y.iter().sum::<f64>() / y.len() as f64,
        }
    }
}

/// How the clipping bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipRule {
    None,
    /// Largest absolute training target (after any target scaling).
    #[default]
    MaxAbsY,
    Fixed(f64),
}

impl ClipRule {
    pub fn bound(self, y: &[f64]) -> Option<f64> {
        match self {
            ClipRule::None => None,
            ClipRule::MaxAbsY => Some(y.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
            ClipRule::Fixed(m) => Some(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    pub values: Vec<f64>,
    pub fallback: f64,
    pub clip: Option<f64>,
}

/// Per-cell means of `y`. `groups[j]` lists the training rows in cell `j`.
pub fn fit_constant(
    groups: &[Vec<usize>],
    y: &[f64],
    fallback: f64,
    clip_bound: Option<f64>,
) -> ConstantModel {
    let values = groups
        .iter()
        .map(|rows| {
            let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
            match clip_bound {
                Some(m) => clip(mean, m),
                None => mean,
            }
        })
        .collect();
    ConstantModel {
        values,
        fallback,
        clip: clip_bound,
    }
}

impl ConstantModel {
    pub fn predict(&self, cell: Option<CellId>) -> f64 {
        cell.and_then(|c| self.values.get(c).copied())
            .unwrap_or(self.fallback)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelCell {
    /// Too few points for a kernel fit; the cell predicts its mean.
    Mean(f64),
    Kernel {
        support: Array2<f64>,
        alpha: Vec<f64>,
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCellModel {
    pub cells: Vec<KernelCell>,
    pub lambda2: f64,
    pub clip: Option<f64>,
    /// Size of the full training sample; the ridge term is scaled by it.
    pub n_train: usize,
    pub fallback: f64,
}

#[derive(Debug, Clone)]
pub struct KernelFit {
    pub support: Array2<f64>,
    pub alpha: Vec<f64>,
    pub report: SpdSolveReport,
}

/// Kernel ridge fit of one cell.
///
/// Minimizes `λ₂‖f‖² + (1/n) Σ_{i ∈ cell} (y_i − f(x_i))²` over the Gaussian
/// RKHS, where `n` is the global sample size. By the representer theorem the
/// minimizer is `Σ_a α_a k(·, x_a)` with `(K + n·λ₂·I) α = y_cell`.
pub fn fit_kernel_cell(
    x_cell: ArrayView2<f64>,
    y_cell: &[f64],
    gamma: f64,
    lambda2: f64,
    n: usize,
) -> Result<KernelFit> {
    let n_j = x_cell.nrows();
    if n_j == 0 || y_cell.len() != n_j {
        return Err(HteError::Training(format!(
            "kernel cell needs matching non-empty inputs, got {n_j} rows and {} targets",
            y_cell.len()
        )));
    }
    if !(gamma > 0.0) || !(lambda2 > 0.0) {
        return Err(HteError::config("gamma/lambda2", "must both be positive"));
    }
    if n < n_j {
        return Err(HteError::Training(format!(
            "global size {n} smaller than cell size {n_j}"
        )));
    }
    let mut k = gaussian_gram(x_cell, gamma);
    let ridge = n as f64 * lambda2;
    for i in 0..n_j {
        k[[i, i]] += ridge;
    }
    let report = solve_spd(&k, y_cell)?;
    Ok(KernelFit {
        support: x_cell.to_owned(),
        alpha: report.solution.clone(),
        report,
    })
}

/// Settings shared by every cell of a kernel model.
#[derive(Debug, Clone, Copy)]
pub struct KernelSettings {
    pub gamma: f64,
    pub lambda2: f64,
    pub min_cell: usize,
    pub clip: Option<f64>,
    pub fallback: f64,
}

/// Fits all cells of one partition; cells are solved in parallel.
pub fn fit_kernel_model(
    groups: &[Vec<usize>],
    x: ArrayView2<f64>,
    y: &[f64],
    settings: KernelSettings,
) -> Result<KernelCellModel> {
    let n = x.nrows();
    let cells = groups
        .par_iter()
        .map(|rows| {
            if rows.len() < settings.min_cell.max(1) {
                let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                return Ok(KernelCell::Mean(mean));
            }
            let x_cell = x.select(ndarray::Axis(0), rows);
            let y_cell: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let fit = fit_kernel_cell(x_cell.view(), &y_cell, settings.gamma, settings.lambda2, n)?;
            Ok(KernelCell::Kernel {
                support: fit.support,
                alpha: fit.alpha,
                gamma: settings.gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelCellModel {
        cells,
        lambda2: settings.lambda2,
        clip: settings.clip,
        n_train: n,
        fallback: settings.fallback,
    })
}

impl KernelCell {
    /// Unclipped decision value of the cell at `x`.
    pub fn raw(&self, x: &[f64]) -> f64 {
        match self {
            KernelCell::Mean(m) => *m,
            KernelCell::Kernel {
                support,
                alpha,
                gamma,
            } => {
                let inv = 1.0 / (gamma * gamma);
                support
                    .rows()
                    .into_iter()
                    .zip(alpha)
                    .map(|(s, a)| {
                        a * gaussian_kernel(s.as_slice().expect("standard layout"), x, inv)
                    })
                    .sum()
            }
        }
    }
}

impl KernelCellModel {
    pub fn predict(&self, cell: Option<CellId>, x: &[f64]) -> f64 {
        match cell.and_then(|c| self.cells.get(c)) {
            None => self.fallback,
            Some(c) => {
                let raw = c.raw(x);
                match self.clip {
                    Some(m) => clip(raw, m),
                    None => raw,
                }
            }
        }
    }
}

/// Local regressor attached to a partition.
#[derive(Debug, Clone, PartialEq)]
pub enum CellModel {
    Constant(ConstantModel),
    Kernel(KernelCellModel),
}

impl CellModel {
    pub fn predict(&self, cell: Option<CellId>, x: &[f64]) -> f64 {
        match self {
            CellModel::Constant(m) => m.predict(cell),
            CellModel::Kernel(m) => m.predict(cell, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clip_examples() {
        assert_eq!(clip(2.0, 1.0), 1.0);
        assert_eq!(clip(-3.0, 1.0), -1.0);
        assert_eq!(clip(0.5, 1.0), 0.5);
    }

    #[test]
    fn constant_means_and_fallback() {
        let y = [1.0, 3.0, 5.0];
        let m = fit_constant(
            &[vec![0, 1], vec![2]],
            &y,
            FallbackRule::Zero.value(&y),
            None,
        );
        assert_eq!(m.predict(Some(0)), 2.0);
        assert_eq!(m.predict(Some(1)), 5.0);
        assert_eq!(m.predict(None), 0.0);
        assert_eq!(FallbackRule::GlobalMean.value(&y), 3.0);
    }

    #[test]
    fn single_point_kernel_cell_is_shrunk_constant() {
        let fit = fit_kernel_cell(array![[0.2, 0.4]].view(), &[3.0], 1.0, 1.0, 1).unwrap();
        assert_eq!(fit.alpha, vec![1.5]);
        let model = KernelCellModel {
            cells: vec![KernelCell::Kernel {
                support: fit.support,
                alpha: fit.alpha,
                gamma: 1.0,
            }],
            lambda2: 1.0,
            clip: Some(10.0),
            n_train: 1,
            fallback: 0.0,
        };
        assert_eq!(model.predict(Some(0), &[0.2, 0.4]), 1.5);
        assert_eq!(model.predict(None, &[0.2, 0.4]), 0.0);
    }

    #[test]
    fn raw_value_is_clipped() {
        let model = KernelCellModel {
            cells: vec![KernelCell::Kernel {
                support: array![[0.0]],
                alpha: vec![2.4],
                gamma: 1.0,
            }],
            lambda2: 1.0,
            clip: Some(1.0),
            n_train: 1,
            fallback: 0.0,
        };
        assert_eq!(model.predict(Some(0), &[0.0]), 1.0);
    }

    #[test]
    fn vanishing_ridge_interpolates() {
        let x = array![[0.0], [0.7], [1.5]];
        let y = [1.0, -2.0, 0.5];
        let fit = fit_kernel_cell(x.view(), &y, 0.5, 1e-12, 3).unwrap();
        let cell = KernelCell::Kernel {
            support: fit.support,
            alpha: fit.alpha,
            gamma: 0.5,
        };
        for (row, target) in x.rows().into_iter().zip(y) {
            assert!((cell.raw(row.as_slice().unwrap()) - target).abs() < 1e-6);
        }
    }

    #[test]
    fn two_point_cell_matches_hand_inverse() {
        let x = array![[0.0], [1.0]];
        let y = [1.0, 2.0];
        let (gamma, lambda2, n) = (1.0, 0.1, 4);
        let fit = fit_kernel_cell(x.view(), &y, gamma, lambda2, n).unwrap();
        let k = (-1.0f64).exp();
        let a = 1.0 + n as f64 * lambda2;
        let det = a * a - k * k;
        let expected = [(a * y[0] - k * y[1]) / det, (a * y[1] - k * y[0]) / det];
        for (got, want) in fit.alpha.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn small_cells_fall_back_to_means() {
        let x = array![[0.0], [0.1], [5.0], [5.1], [5.2]];
        let y = [1.0, 3.0, 0.0, 1.0, 2.0];
        let settings = KernelSettings {
            gamma: 1.0,
            lambda2: 0.01,
            min_cell: 3,
            clip: None,
            fallback: 0.0,
        };
        let m = fit_kernel_model(&[vec![0, 1], vec![2, 3, 4]], x.view(), &y, settings).unwrap();
        assert_eq!(m.cells[0], KernelCell::Mean(2.0));
        assert!(matches!(m.cells[1], KernelCell::Kernel { .. }));
    }

    #[test]
    fn invalid_kernel_parameters() {
        assert!(fit_kernel_cell(array![[0.0]].view(), &[1.0], 0.0, 1.0, 1).is_err());
        assert!(fit_kernel_cell(array![[0.0]].view(), &[1.0], 1.0, 1.0, 0).is_err());
    }
}
