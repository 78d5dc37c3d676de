//! Accuracy and timing metrics, convergence slopes, and parameter studies.

use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::TrainConfig;
use crate::data::{gen_counter3d, gen_sin16, split, Dataset};
use crate::ensemble::train_ensemble;
use crate::error::{HteError, Result};
use crate::rng::derive_seed;

/// Mean squared error `(1/q) Σ (y_j − pred_j)²`.
pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(HteError::data(format!(
            "prediction/target length mismatch: {} vs {}",
            pred.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(HteError::data("mse of an empty set"));
    }
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / y.len() as f64)
}

/// Average running time over repeated trainings, in seconds.
pub fn art(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(HteError::data("no timings"));
    }
    Ok(times.iter().sum::<f64>() / times.len() as f64)
}

/// Mean and coefficient of variation of a set of timings.
pub fn art_with_cv(times: &[f64]) -> Result<(f64, f64)> {
    let mean = art(times)?;
    let (_, sd) = mean_and_std(times);
    Ok((mean, if mean > 0.0 { sd / mean } else { 0.0 }))
}

/// Sample mean and sample standard deviation (divisor `n − 1`, zero for one value).
pub fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares line through `(log n, log mse)`; returns `(slope, intercept)`.
pub fn convergence_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(HteError::data(
            "convergence slope needs at least two points",
        ));
    }
    if let Some((n, m)) = points.iter().find(|(n, m)| !(*n > 0.0) || !(*m > 0.0)) {
        return Err(HteError::data(format!(
            "sizes and errors must be positive, got ({n}, {m})"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(n, m)| (n.ln(), m.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HteError::data(
            "convergence slope needs at least two distinct sizes",
        ));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Where study data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Sin16 {
        n_train: usize,
        n_test: usize,
    },
    Counter3d {
        n_train: usize,
        n_test: usize,
    },
    /// Fixed table, reshuffled into train/test per dataset repetition.
    Table {
        data: Dataset,
        train_fraction: f64,
    },
}

impl DataSource {
    fn draw(
        &self,
        n_train: Option<usize>,
        n_test: Option<usize>,
        seed: u64,
    ) -> Result<(Dataset, Dataset)> {
        let train_seed = derive_seed(seed, &[0]);
        let test_seed = derive_seed(seed, &[1]);
        match self {
            DataSource::Sin16 {
                n_train: a,
                n_test: b,
            } => Ok((
                gen_sin16(n_train.unwrap_or(*a), train_seed),
                gen_sin16(n_test.unwrap_or(*b), test_seed),
            )),
            DataSource::Counter3d {
                n_train: a,
                n_test: b,
            } => Ok((
                gen_counter3d(n_train.unwrap_or(*a), train_seed),
                gen_counter3d(n_test.unwrap_or(*b), test_seed),
            )),
            DataSource::Table {
                data,
                train_fraction,
            } => split(data, *train_fraction, train_seed),
        }
    }
}

/// Named parameter settings; every point assigns a value to each name.
///
/// Besides the numeric [`TrainConfig`] fields, `n` (training size) and
/// `n_test` are understood for synthetic sources.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    pub names: Vec<String>,
    pub points: Vec<Vec<f64>>,
}

impl ParameterGrid {
    /// Every combination of the axis values, last axis varying fastest.
    pub fn cartesian(axes: &[(&str, Vec<f64>)]) -> Self {
        let mut points = vec![Vec::new()];
        for (_, values) in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        ParameterGrid {
            names: axes.iter().map(|(n, _)| n.to_string()).collect(),
            points,
        }
    }

    /// Explicit list of points.
    pub fn explicit(names: &[&str], points: Vec<Vec<f64>>) -> Self {
        ParameterGrid {
            names: names.iter().map(|s| s.to_string()).collect(),
            points,
        }
    }

    pub fn single() -> Self {
        ParameterGrid {
            names: Vec::new(),
            points: vec![Vec::new()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub source: DataSource,
    pub base: TrainConfig,
    pub grid: ParameterGrid,
    pub repetitions: usize,
    /// Consecutive repetitions sharing one dataset draw.
    pub runs_per_dataset: usize,
    pub seed: u64,
    /// Time training runs; repetitions then run one after another.
    pub measure_art: bool,
}

/// Aggregate over the repetitions of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub params: Vec<(String, f64)>,
    pub reps: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub art_mean_s: f64,
    pub predict_time_s: f64,
    /// Test MSE of every repetition, in repetition order.
    pub mse_runs: Vec<f64>,
    pub error: Option<String>,
}

impl StudyResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

struct RunOutcome {
    mse: f64,
    train_s: f64,
    predict_s: f64,
}

fn run_once(spec: &StudySpec, point: &[f64], rep: usize) -> Result<RunOutcome> {
    let mut cfg = spec.base.clone();
    let (mut n_train, mut n_test) = (None, None);
    for (name, &value) in spec.grid.names.iter().zip(point) {
        match name.as_str() {
            "n" | "n_train" => n_train = Some(value as usize),
            "n_test" => n_test = Some(value as usize),
            other => cfg.set_param(other, value)?,
        }
    }
    let data_rep = (rep / spec.runs_per_dataset.max(1)) as u64;
    let (train, test) =
        spec.source
            .draw(n_train, n_test, derive_seed(spec.seed, &[data_rep, 0]))?;
    cfg.seed = derive_seed(spec.seed, &[rep as u64, 1]);

    let start = Instant::now();
    let model = train_ensemble(&train, &cfg)?;
    let train_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let pred = model.predict(test.x.view())?;
    let predict_s = start.elapsed().as_secs_f64();
    Ok(RunOutcome {
        mse: mse(&pred, &test.y)?,
        train_s,
        predict_s,
    })
}

/// Trains and evaluates every grid point `repetitions` times.
///
/// Repetition `r` uses the same data draw and model seed at every grid point,
/// so differences between points are paired. A failing grid point is reported
/// in its row and the study moves on.
pub fn run_study(spec: &StudySpec) -> Vec<StudyResult> {
    spec.grid
        .points
        .iter()
        .map(|point| {
            let params: Vec<(String, f64)> = spec
                .grid
                .names
                .iter()
                .cloned()
                .zip(point.iter().copied())
                .collect();
            let outcomes: Result<Vec<RunOutcome>> = if spec.measure_art {
                (0..spec.repetitions)
                    .map(|r| run_once(spec, point, r))
                    .collect()
            } else {
                (0..spec.repetitions)
                    .into_par_iter()
                    .map(|r| run_once(spec, point, r))
                    .collect()
            };
            match outcomes {
                Ok(runs) if !runs.is_empty() => {
                    let mse_runs: Vec<f64> = runs.iter().map(|r| r.mse).collect();
                    let (mse_mean, mse_std) = mean_and_std(&mse_runs);
                    let times: Vec<f64> = runs.iter().map(|r| r.train_s).collect();
                    let predict: Vec<f64> = runs.iter().map(|r| r.predict_s).collect();
                    StudyResult {
                        params,
                        reps: runs.len(),
                        mse_mean,
                        mse_std,
                        art_mean_s: art(&times).unwrap_or(f64::NAN),
                        predict_time_s: art(&predict).unwrap_or(f64::NAN),
                        mse_runs,
                        error: None,
                    }
                }
                other => StudyResult {
                    params,
                    reps: 0,
                    mse_mean: f64::NAN,
                    mse_std: f64::NAN,
                    art_mean_s: f64::NAN,
                    predict_time_s: f64::NAN,
                    mse_runs: Vec::new(),
                    error: Some(match other {
                        Err(e) => e.to_string(),
                        Ok(_) => "no repetitions requested".into(),
                    }),
                },
            }
        })
        .collect()
}

/// Study table as CSV: `param.*, reps, mse_mean, mse_std, art_mean_s, predict_time_s`.
pub fn results_to_csv(results: &[StudyResult]) -> String {
    let mut out = String::new();
    let names: Vec<String> = results
        .first()
        .map(|r| r.params.iter().map(|(n, _)| format!("param.{n}")).collect())
        .unwrap_or_default();
    let mut header = names;
    header.extend(
        [
            "reps",
            "mse_mean",
            "mse_std",
            "art_mean_s",
            "predict_time_s",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    out.push_str(&header.join(","));
    out.push('\n');
    for r in results {
        let mut row: Vec<String> = r.params.iter().map(|(_, v)| v.to_string()).collect();
        row.push(r.reps.to_string());
        for v in [r.mse_mean, r.mse_std, r.art_mean_s, r.predict_time_s] {
            row.push(v.to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// JSON mirror of [`results_to_csv`]; failed rows carry an `error` field.
pub fn results_to_json(results: &[StudyResult]) -> Value {
    let num = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
    Value::Array(
        results
            .iter()
            .map(|r| {
                let mut obj = Map::new();
                for (n, v) in &r.params {
                    obj.insert(format!("param.{n}"), num(*v));
                }
                obj.insert("reps".into(), json!(r.reps));
                obj.insert("mse_mean".into(), num(r.mse_mean));
                obj.insert("mse_std".into(), num(r.mse_std));
                obj.insert("art_mean_s".into(), num(r.art_mean_s));
                obj.insert("predict_time_s".into(), num(r.predict_time_s));
                if let Some(e) = &r.error {
                    obj.insert("error".into(), json!(e));
                }
                Value::Object(obj)
            })
            .collect(),
    )
}
