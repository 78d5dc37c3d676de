//! Ensemble training and prediction.
//!
//! Each member owns a partition and a local model. Members are trained from
//! independent random streams keyed by `(seed, member index, ...)` and are
//! collected in member order, so the trained model does not depend on how
//! many worker threads were used.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, PartitionKind, TrainConfig};
use crate::data::{default_scale, split_indices, Dataset, Standardizer, TargetColumn};
use crate::error::{check_dim, HteError, Result};
use crate::local_models::{fit_constant, fit_kernel_model, CellModel, KernelSettings};
use crate::partition::{build_adaptive, build_grid, group_by_cell, CellId, Partition};
use crate::rng::{derive_seed, stream};
use crate::transform::{sample_rotation, sample_transform_with_rotation};

/// Stream coordinate of the member-level draws (rotation).
const ROTATION_STREAM: u64 = 0;
/// Stream coordinate of the validation split in best-scored mode.
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub partition: Partition,
    pub model: CellModel,
    /// Index of the winning candidate (0 without best-scored selection).
    pub candidate: usize,
}

impl Member {
    /// Predictions in standardized target units for already standardized rows.
    pub fn predict_standardized(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let cells = self.partition.assign_rows(x)?;
        Ok(cells
            .into_par_iter()
            .enumerate()
            .map(|(i, cell)| {
                let row = x.row(i).to_vec();
                self.model.predict(cell, &row)
            })
            .collect())
    }
}

/// Metadata carried next to the config in a saved model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    #[serde(default)]
    pub feature_names: Option<Vec<String>>,
    #[serde(default)]
    pub target: Option<TargetColumn>,
    /// Default bin width `ĥ` measured on the standardized training inputs.
    #[serde(default)]
    pub h_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub config: TrainConfig,
    pub meta: ModelMeta,
    pub standardizer: Standardizer,
    pub members: Vec<Member>,
}

struct Context<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    cfg: &'a TrainConfig,
    h_hat: Option<f64>,
    clip: Option<f64>,
    fallback: f64,
}

/// Trains `cfg.trees` members on `ds` and returns the ensemble.
pub fn train_ensemble(ds: &Dataset, cfg: &TrainConfig) -> Result<EnsembleModel> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(ds, cfg.standardize_features, cfg.standardize_target);
    let scaled = standardizer.apply(ds)?;
    let h_hat = match cfg.partition {
        PartitionKind::Grid => Some(default_scale(scaled.x.view())?.0),
        PartitionKind::Adaptive => None,
    };
    let ctx = Context {
        x: &scaled.x,
        y: &scaled.y,
        cfg,
        h_hat,
        clip: cfg.clip.bound(&scaled.y),
        fallback: cfg.fallback.value(&scaled.y),
    };
    let members = (0..cfg.trees)
        .into_par_iter()
        .map(|t| train_member_in(&ctx, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        config: cfg.clone(),
        meta: ModelMeta {
            feature_names: ds.feature_names.clone(),
            target: None,
            h_hat,
        },
        standardizer,
        members,
    })
}

/// Trains member `t` alone on an already standardized dataset.
///
/// The result depends only on the data, the config (apart from `trees`) and
/// `t`, so a member is identical whatever the ensemble size.
pub fn train_member(scaled: &Dataset, cfg: &TrainConfig, t: usize) -> Result<Member> {
    cfg.validate()?;
    let h_hat = match cfg.partition {
        PartitionKind::Grid => Some(default_scale(scaled.x.view())?.0),
        PartitionKind::Adaptive => None,
    };
    let ctx = Context {
        x: &scaled.x,
        y: &scaled.y,
        cfg,
        h_hat,
        clip: cfg.clip.bound(&scaled.y),
        fallback: cfg.fallback.value(&scaled.y),
    };
    train_member_in(&ctx, t)
}

fn train_member_in(ctx: &Context<'_>, t: usize) -> Result<Member> {
    let cfg = ctx.cfg;
    let t64 = t as u64;
    let d = ctx.x.ncols();
    let rotation = sample_rotation(d, &mut stream(cfg.seed, &[t64, ROTATION_STREAM]));

    if cfg.partition == PartitionKind::Adaptive {
        let (tree, assignment) = build_adaptive(&rotation, ctx.x.view(), cfg.min_leaf)?;
        let partition = Partition::Adaptive(tree);
        let model = fit_local(ctx, &partition, &assignment, ctx.x.view(), ctx.y)?;
        return Ok(Member {
            partition,
            model,
            candidate: 0,
        });
    }

    let h_hat = ctx.h_hat.expect("grid mode computes the default scale");
    let pairs = cfg.scale_candidates();
    let fit_candidate = |i: usize, x: ArrayView2<f64>, y: &[f64]| -> Result<Member> {
        let (h_lower, h_upper) = pairs[i].widths(h_hat);
        let h = sample_transform_with_rotation(
            rotation.clone(),
            h_lower,
            h_upper,
            &mut stream(cfg.seed, &[t64, 1 + i as u64]),
        )?;
        let (grid, assignment) = build_grid(&h, x)?;
        let partition = Partition::Grid(grid);
        let model = fit_local(ctx, &partition, &assignment, x, y)?;
        Ok(Member {
            partition,
            model,
            candidate: i,
        })
    };

    if pairs.len() == 1 {
        return fit_candidate(0, ctx.x.view(), ctx.y);
    }

    let n = ctx.x.nrows();
    let (train_rows, valid_rows) = split_indices(
        n,
        1.0 - cfg.validation_fraction,
        derive_seed(cfg.seed, &[t64, SPLIT_STREAM]),
    )
    .map_err(|e| HteError::Training(format!("member {t}: cannot form a validation split: {e}")))?;
    let x_train = ctx.x.select(Axis(0), &train_rows);
    let y_train: Vec<f64> = train_rows.iter().map(|&i| ctx.y[i]).collect();
    let x_valid = ctx.x.select(Axis(0), &valid_rows);
    let y_valid: Vec<f64> = valid_rows.iter().map(|&i| ctx.y[i]).collect();

    let scored = (0..pairs.len())
        .into_par_iter()
        .map(|i| {
            let member = fit_candidate(i, x_train.view(), &y_train)?;
            let pred = member.predict_standardized(x_valid.view())?;
            let score = crate::evaluation::mse(&pred, &y_valid)?;
            Ok((member, score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_best(scored))
}

/// Lowest score wins; ties go to the earliest candidate.
pub fn select_best<T>(scored: Vec<(T, f64)>) -> T {
    let mut best: Option<(T, f64)> = None;
    for (item, score) in scored {
        let better = match &best {
            None => true,
            Some((_, s)) => score < *s,
        };
        if better {
            best = Some((item, score));
        }
    }
    best.expect("at least one candidate").0
}

fn fit_local(
    ctx: &Context<'_>,
    partition: &Partition,
    assignment: &[CellId],
    x: ArrayView2<f64>,
    y: &[f64],
) -> Result<CellModel> {
    let groups = group_by_cell(assignment, partition.n_cells());
    Ok(match ctx.cfg.mode {
        Mode::Nht => CellModel::Constant(fit_constant(&groups, y, ctx.fallback, ctx.clip)),
        Mode::Kht => CellModel::Kernel(fit_kernel_model(
            &groups,
            x,
            y,
            KernelSettings {
                gamma: ctx.cfg.gamma,
                lambda2: ctx.cfg.lambda2_for(x.nrows()),
                min_cell: ctx.cfg.kernel_min_cell,
                clip: ctx.clip,
                fallback: ctx.fallback,
            },
        )?),
    })
}

impl EnsembleModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn total_cells(&self) -> usize {
        self.members.iter().map(|m| m.partition.n_cells()).sum()
    }

    /// Per-member predictions in target units, one vector per member.
    pub fn predict_members(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        let raw = self.member_outputs(x)?;
        Ok(raw.iter().map(|p| self.standardizer.inverse_y(p)).collect())
    }

    fn member_outputs(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        check_dim(self.dim(), x.ncols())?;
        let z = self.standardizer.transform_x(x)?;
        self.members
            .par_iter()
            .map(|m| m.predict_standardized(z.view()))
            .collect()
    }

    /// Average of the member predictions.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let outputs = self.member_outputs(x)?;
        let t = outputs.len() as f64;
        let mut avg = vec![0.0; x.nrows()];
        for member in &outputs {
            for (a, p) in avg.iter_mut().zip(member) {
                *a += p;
            }
        }
        for a in avg.iter_mut() {
            *a /= t;
        }
        Ok(self.standardizer.inverse_y(&avg))
    }
}
