use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use hte::data::{load_csv, read_numeric_csv, NumericTable};
use hte::evaluation::{
    mse, results_to_csv, results_to_json, run_study, DataSource, ParameterGrid, StudyResult,
    StudySpec,
};
use hte::model_io::{self, FORMAT_VERSION};
use hte::presets::preset;
use hte::{
    theoretical_schedule, EnsembleModel, HteError, Result, Smoothness, TargetColumn, TrainConfig,
};
use serde_json::json;

use crate::settings::{CliConfig, SourceConfig};
use crate::{
    BenchArgs, Command, DataArgs, Format, InspectArgs, PredictArgs, ScheduleArgs, SmoothnessClass,
    StudyArgs, TableArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Bench(a) => bench(a),
        Command::Study(a) => study(a),
        Command::Schedule(a) => schedule(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn apply_overrides(cfg: &mut TrainConfig, overrides: &[(String, f64)]) -> Result<()> {
    for (k, v) in overrides {
        cfg.set_param(k, *v)?;
    }
    Ok(())
}

fn has_header(args: &DataArgs, cfg: Option<bool>) -> bool {
    !args.no_header && cfg.unwrap_or(true)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let data = args
        .data
        .data
        .clone()
        .or(file.data.clone())
        .ok_or_else(|| HteError::config("data", "no training data given"))?;
    let model_path = args
        .model
        .clone()
        .or(file.model.clone())
        .ok_or_else(|| HteError::config("model", "no output model path given"))?;
    let mut cfg = file.train.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate()?;

    let header = has_header(&args.data, file.has_header);
    let table = read_numeric_csv(&data, header)?;
    if table.n_columns() < 2 {
        return Err(HteError::data(
            "need at least one feature column besides the target",
        ));
    }
    let target = args
        .data
        .target
        .clone()
        .or(file.target.clone())
        .unwrap_or_else(|| match table.header.as_ref().and_then(|h| h.last()) {
            Some(name) => TargetColumn::Name(name.clone()),
            None => TargetColumn::Index(table.n_columns() - 1),
        });
    let t = table.column_index(&target)?;
    let ds = table.into_dataset(Some(t))?;

    let start = Instant::now();
    let mut model = hte::train_ensemble(&ds, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    model.meta.target = Some(target);
    model_io::save(&model, &model_path)?;

    let mode = serde_json::to_value(cfg.mode).unwrap_or_default();
    let partition = serde_json::to_value(cfg.partition).unwrap_or_default();
    if args.json {
        let summary = json!({
            "trees": model.n_members(),
            "mode": mode,
            "partition": partition,
            "cells": model.total_cells(),
            "train_seconds": seconds,
            "n": ds.n(),
            "d": ds.d(),
            "model": model_path,
        });
        println!("{summary}");
    } else {
        println!(
            "trained T={} mode={} partition={} cells={} train_s={:.3} -> {}",
            model.n_members(),
            mode.as_str().unwrap_or("?"),
            partition.as_str().unwrap_or("?"),
            model.total_cells(),
            seconds,
            model_path.display()
        );
    }
    Ok(())
}

/// Target column for prediction: explicit, or the one recorded at training
/// time when the file still carries it.
fn predict_target(
    args: &DataArgs,
    model: &EnsembleModel,
    table: &NumericTable,
) -> Result<Option<usize>> {
    if let Some(t) = &args.target {
        return table.column_index(t).map(Some);
    }
    let cols = table.n_columns();
    Ok(match &model.meta.target {
        Some(TargetColumn::Name(name)) => table
            .header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name)),
        Some(TargetColumn::Index(i)) if cols == model.dim() + 1 && *i < cols => Some(*i),
        _ => None,
    })
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let data = args
        .data
        .data
        .clone()
        .ok_or_else(|| HteError::config("data", "no input data given"))?;
    let table = read_numeric_csv(&data, has_header(&args.data, None))?;
    let target = predict_target(&args.data, &model, &table)?;
    let ds = table.into_dataset(target)?;
    if ds.d() != model.dim() {
        return Err(HteError::DimensionMismatch {
            expected: model.dim(),
            actual: ds.d(),
        });
    }
    let pred = model.predict(ds.x.view())?;

    let mut text = String::from("prediction\n");
    for p in &pred {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    write_text(args.out.as_deref(), &text)?;
    if target.is_some() {
        let err = mse(&pred, &ds.y)?;
        if args.out.is_some() {
            println!("mse {err}");
        } else {
            eprintln!("mse {err}");
        }
    }
    Ok(())
}

fn emit_table(results: &[StudyResult], table: &TableArgs) -> Result<()> {
    let text = match table.format {
        Format::Csv => results_to_csv(results),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&results_to_json(results))
                .map_err(|e| HteError::data(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    write_text(table.out.as_deref(), &text)?;
    let failed: Vec<&str> = results.iter().filter_map(|r| r.error.as_deref()).collect();
    if let Some(first) = failed.first() {
        return Err(HteError::Training(format!(
            "{} of {} grid points failed; first failure: {first}",
            failed.len(),
            results.len()
        )));
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut spec = preset(&args.preset, args.reps, args.seed)?;
    apply_overrides(&mut spec.base, &args.overrides)?;
    spec.base.validate()?;
    if args.no_timing {
        spec.measure_art = false;
    }
    let results = run_study(&spec);
    emit_table(&results, &args.table)
}

fn study_source(source: &SourceConfig) -> Result<DataSource> {
    Ok(match source {
        SourceConfig::Sin16 { n_train, n_test } => DataSource::Sin16 {
            n_train: *n_train,
            n_test: *n_test,
        },
        SourceConfig::Counter3d { n_train, n_test } => DataSource::Counter3d {
            n_train: *n_train,
            n_test: *n_test,
        },
        SourceConfig::Csv {
            path,
            target,
            has_header,
            train_fraction,
        } => DataSource::Table {
            data: load_csv(path, target, *has_header)?,
            train_fraction: *train_fraction,
        },
    })
}

fn study(args: StudyArgs) -> Result<()> {
    let file = CliConfig::load(&args.config)?;
    let sc = file
        .study
        .ok_or_else(|| HteError::config("study", "missing from config"))?;
    let grid = if let Some(points) = &sc.points {
        if let Some(p) = points.values.iter().find(|p| p.len() != points.names.len()) {
            return Err(HteError::config(
                "study.points",
                format!(
                    "point has {} values for {} names",
                    p.len(),
                    points.names.len()
                ),
            ));
        }
        ParameterGrid {
            names: points.names.clone(),
            points: points.values.clone(),
        }
    } else if sc.axes.is_empty() {
        ParameterGrid::single()
    } else {
        let axes: Vec<(&str, Vec<f64>)> = sc
            .axes
            .iter()
            .map(|a| (a.name.as_str(), a.values.clone()))
            .collect();
        ParameterGrid::cartesian(&axes)
    };
    let mut base = file.train.clone();
    apply_overrides(&mut base, &args.overrides)?;
    base.validate()?;
    let reps = args.reps.unwrap_or(sc.reps);
    if reps == 0 {
        return Err(HteError::config("reps", "must be ≥ 1"));
    }
    if sc.runs_per_dataset == 0 {
        return Err(HteError::config("runs_per_dataset", "must be ≥ 1"));
    }
    let spec = StudySpec {
        source: study_source(&sc.source)?,
        base,
        grid,
        repetitions: reps,
        runs_per_dataset: sc.runs_per_dataset,
        seed: args.seed.unwrap_or(sc.seed),
        measure_art: sc.measure_art,
    };
    let results = run_study(&spec);
    emit_table(&results, &args.table)
}

fn schedule(args: ScheduleArgs) -> Result<()> {
    let smoothness = match args.class {
        SmoothnessClass::C0 => Smoothness::C0 { alpha: args.alpha },
        SmoothnessClass::C1 => Smoothness::C1 { alpha: args.alpha },
        SmoothnessClass::Ck => Smoothness::Ck {
            k: args
                .k
                .ok_or_else(|| HteError::config("k", "required for the ck class"))?,
            alpha: args.alpha,
        },
    };
    let s = theoretical_schedule(args.n, args.d, smoothness, args.delta)?;
    println!(
        "{}",
        serde_json::to_string(&s).map_err(|e| HteError::data(e.to_string()))?
    );
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let value = if args.emit_config {
        let cfg = CliConfig {
            train: model.config.clone(),
            target: model.meta.target.clone(),
            ..Default::default()
        };
        serde_json::to_value(cfg)
    } else {
        let cells: Vec<usize> = model
            .members
            .iter()
            .map(|m| m.partition.n_cells())
            .collect();
        let candidates: Vec<usize> = model.members.iter().map(|m| m.candidate).collect();
        Ok(json!({
            "format_version": FORMAT_VERSION,
            "d": model.dim(),
            "trees": model.n_members(),
            "total_cells": model.total_cells(),
            "cells_per_member": cells,
            "winning_candidates": candidates,
            "meta": model.meta,
            "standardizer": model.standardizer,
            "config": model.config,
        }))
    }
    .map_err(|e| HteError::data(e.to_string()))?;
    let text = serde_json::to_string_pretty(&value).map_err(|e| HteError::data(e.to_string()))?;
    println!("{text}");
    Ok(())
}
