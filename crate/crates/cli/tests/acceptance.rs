//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! fails the process if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hte::data::{gen_counter3d, gen_sin16, split, Dataset};
use hte::evaluation::{convergence_slope, mse, run_study, DataSource, ParameterGrid, StudySpec};
use hte::linalg::gaussian_gram;
use hte::local_models::{fit_kernel_cell, CellModel};
use hte::model_io::to_bytes;
use hte::partition::{build_adaptive, build_grid, group_by_cell, Partition};
use hte::presets::{preset, PRESETS};
use hte::rng::stream;
use hte::transform::{orthogonality_error, sample_rotation, sample_transform};
use hte::{train_ensemble, Mode, PartitionKind, TrainConfig};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let spent = start.elapsed();
    let detail = format!("{detail}, {:.1}s", spent.as_secs_f64());
    ensure(spent <= limit, detail)
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        a.nrows(),
        a.ncols(),
        a.as_standard_layout().as_slice().unwrap(),
    )
}

fn rotations() -> Outcome {
    let start = Instant::now();
    let mut worst_orth = 0f64;
    let mut worst_det = 0f64;
    for i in 0..10_000u64 {
        let d = 1 + (i % 8) as usize;
        let r = sample_rotation(d, &mut stream(1, &[i]));
        worst_orth = worst_orth.max(orthogonality_error(r.view()));
        worst_det = worst_det.max((to_na(&r).determinant() - 1.0).abs());
    }
    let ok = worst_orth <= 1e-10 && worst_det <= 1e-10;
    within(
        Duration::from_secs(10),
        start,
        format!("max |RᵀR−I| {worst_orth:.1e}, max |det−1| {worst_det:.1e}"),
    )
    .and_then(|d| ensure(ok, d))
}

fn partitions() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2, &[]);
    for t in 0..20u64 {
        let d = 1 + (t % 5) as usize;
        let h = sample_transform(d, 0.05, 0.5, &mut stream(2, &[t])).unwrap();
        let x = Array2::from_shape_fn((10_000, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        let (grid, cells) = build_grid(&h, x.view()).unwrap();
        // Cells ↔ keys is a bijection and every point carries its cell's key,
        // so sharing a cell is the same as sharing a key.
        let mut seen = BTreeMap::new();
        for (c, k) in grid.keys().iter().enumerate() {
            if seen.insert(k.clone(), c).is_some() {
                return Err(format!("transform {t}: two cells share key {k:?}"));
            }
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            let key = h.bin_key(&row.to_vec()).unwrap();
            if grid.keys()[cells[i]] != key {
                return Err(format!("transform {t}: point {i} key mismatch"));
            }
        }
        let m = 50 + 100 * t as usize;
        let mut xa = x.clone();
        let dup = xa.row(0).to_owned();
        for i in 0..(2 * m).min(xa.nrows()) / 2 {
            xa.row_mut(i).assign(&dup);
        }
        let r = sample_rotation(d, &mut stream(2, &[t, 1]));
        let (tree, cells) = build_adaptive(&r, xa.view(), m).unwrap();
        for rows in group_by_cell(&cells, tree.n_cells()) {
            if rows.len() > m && !rows.iter().all(|&i| xa.row(i) == xa.row(rows[0])) {
                return Err(format!(
                    "transform {t}: leaf with {} > {m} distinct points",
                    rows.len()
                ));
            }
        }
    }
    within(
        Duration::from_secs(10),
        start,
        "20 transforms × 10⁴ points".into(),
    )
}

fn nht_oracle() -> Outcome {
    let mut rng = stream(3, &[]);
    let mut worst = 0f64;
    for trial in 0..50u64 {
        let n = rng.random_range(5..=500);
        let d = rng.random_range(1..=5);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 6.0 - 3.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
        let ds = Dataset::new(x, y).unwrap();
        let cfg = TrainConfig {
            trees: 1,
            seed: trial,
            s_min: rng.random_range(-1.0..1.5),
            s_max: 2.0,
            ..Default::default()
        };
        let model = train_ensemble(&ds, &cfg).unwrap();
        let pred = model.predict(ds.x.view()).unwrap();
        let Partition::Grid(grid) = &model.members[0].partition else {
            return Err("expected a grid partition".into());
        };
        let scaled = model.standardizer.transform_x(ds.x.view()).unwrap();
        let keys: Vec<Vec<i64>> = scaled
            .rows()
            .into_iter()
            .map(|r| grid.transform().bin_key(&r.to_vec()).unwrap())
            .collect();
        let mut sums: BTreeMap<&Vec<i64>, (f64, f64)> = BTreeMap::new();
        for (k, y) in keys.iter().zip(&ds.y) {
            let e = sums.entry(k).or_default();
            e.0 += y;
            e.1 += 1.0;
        }
        for (p, k) in pred.iter().zip(&keys) {
            worst = worst.max((p - sums[k].0 / sums[k].1).abs());
        }
    }
    ensure(
        worst <= 1e-12,
        format!("50 datasets, max deviation {worst:.1e}"),
    )
}

fn krr_oracle() -> Outcome {
    let mut rng = stream(4, &[]);
    let mut worst = 0f64;
    for _ in 0..100 {
        let n_j = rng.random_range(1..=50);
        let d = rng.random_range(1..=6);
        let n = n_j + rng.random_range(0..1000);
        let gamma = rng.random_range(0.1..3.0);
        let lambda2 = 1.0 / n as f64;
        let x = Array2::from_shape_fn((n_j, d), |_| rng.random::<f64>());
        let y: Vec<f64> = (0..n_j).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let fit = fit_kernel_cell(x.view(), &y, gamma, lambda2, n).unwrap();
        let mut k = to_na(&gaussian_gram(x.view(), gamma));
        for i in 0..n_j {
            k[(i, i)] += n as f64 * lambda2;
        }
        let want = k.try_inverse().unwrap() * DVector::from_column_slice(&y);
        let scale = want.amax();
        for (a, b) in fit.alpha.iter().zip(want.iter()) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    ensure(
        worst <= 1e-8,
        format!("100 cells, max relative deviation {worst:.1e}"),
    )
}

fn jensen() -> Outcome {
    let cases = [
        (
            gen_sin16(1000, 1),
            gen_sin16(1000, 2),
            TrainConfig {
                trees: 10,
                ..Default::default()
            },
        ),
        (
            gen_counter3d(1500, 3),
            gen_counter3d(1000, 4),
            TrainConfig {
                trees: 7,
                mode: Mode::Kht,
                standardize_target: true,
                ..Default::default()
            },
        ),
        (
            gen_counter3d(3000, 5),
            gen_counter3d(1000, 6),
            TrainConfig {
                trees: 5,
                mode: Mode::Kht,
                partition: PartitionKind::Adaptive,
                min_leaf: 300,
                ..Default::default()
            },
        ),
        (
            gen_sin16(800, 7),
            gen_sin16(500, 8),
            TrainConfig {
                trees: 6,
                candidates: 5,
                ..Default::default()
            },
        ),
    ];
    let mut checked = 0;
    for (train, test, cfg) in cases {
        for seed in 0..5 {
            let model = train_ensemble(
                &train,
                &TrainConfig {
                    seed,
                    ..cfg.clone()
                },
            )
            .unwrap();
            let members = model.predict_members(test.x.view()).unwrap();
            let ens = mse(&model.predict(test.x.view()).unwrap(), &test.y).unwrap();
            let avg = members
                .iter()
                .map(|p| mse(p, &test.y).unwrap())
                .sum::<f64>()
                / members.len() as f64;
            if ens > avg + 1e-12 {
                return Err(format!("ensemble MSE {ens} above member average {avg}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} test sets"))
}

fn clipping() -> Outcome {
    let mut rng = stream(6, &[]);
    let mut fits = 0;
    let mut active = 0;
    while fits < 100 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(50..400);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
        // A step in the first coordinate makes the ridge fit overshoot.
        let y: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|r| (r[0] - 0.5).signum() * (0.9 + 0.1 * rng.random::<f64>()))
            .collect();
        let ds = Dataset::new(x, y).unwrap();
        let cfg = TrainConfig {
            trees: 1,
            mode: Mode::Kht,
            gamma: rng.random_range(0.3..1.5),
            lambda2: Some(rng.random_range(1e-7..1e-4)),
            s_min: -1.0,
            s_max: 0.0,
            seed: fits,
            ..Default::default()
        };
        let model = train_ensemble(&ds, &cfg).unwrap();
        let member = &model.members[0];
        let CellModel::Kernel(km) = &member.model else {
            return Err("expected a kernel model".into());
        };
        let bound = km.clip.ok_or("clipping disabled")?;
        if ds.y.iter().any(|v| v.abs() > bound) {
            return Err("training target outside the clip bound".into());
        }
        let scaled = model.standardizer.transform_x(ds.x.view()).unwrap();
        let cells = member.partition.assign_rows(scaled.view()).unwrap();
        let (mut raw_risk, mut clip_risk) = (0.0, 0.0);
        for (i, cell) in cells.iter().enumerate() {
            let row = scaled.row(i).to_vec();
            let raw = cell.map(|c| km.cells[c].raw(&row)).unwrap_or(km.fallback);
            let clipped = km.predict(*cell, &row);
            raw_risk += (raw - ds.y[i]).powi(2);
            clip_risk += (clipped - ds.y[i]).powi(2);
            if raw != clipped {
                active += 1;
            }
        }
        if clip_risk > raw_risk {
            return Err(format!(
                "fit {fits}: clipped risk {clip_risk} > raw risk {raw_risk}"
            ));
        }
        fits += 1;
    }
    ensure(
        active > 0,
        format!("100 fits, clipping active on {active} training points"),
    )
}

fn study_spec(source: DataSource, grid: ParameterGrid, reps: usize, seed: u64) -> StudySpec {
    StudySpec {
        source,
        base: TrainConfig::default(),
        grid,
        repetitions: reps,
        runs_per_dataset: 1,
        seed,
        measure_art: false,
    }
}

fn ensemble_vs_single() -> Outcome {
    let start = Instant::now();
    let spec = study_spec(
        DataSource::Sin16 {
            n_train: 2000,
            n_test: 2000,
        },
        ParameterGrid::cartesian(&[("trees", vec![1.0, 10.0])]),
        30,
        7,
    );
    let res = run_study(&spec);
    let (single, ens) = (&res[0], &res[1]);
    if let Some(e) = single.error.as_ref().or(ens.error.as_ref()) {
        return Err(e.clone());
    }
    let wins = single
        .mse_runs
        .iter()
        .zip(&ens.mse_runs)
        .filter(|(a, b)| b < a)
        .count();
    let detail = format!(
        "MSE T=1 {:.5}, T=10 {:.5}, T=10 better in {wins}/30",
        single.mse_mean, ens.mse_mean
    );
    let ok = ens.mse_mean < single.mse_mean && wins * 10 >= 8 * 30;
    within(Duration::from_secs(120), start, detail).and_then(|d| ensure(ok, d))
}

fn scale_unimodality() -> Outcome {
    let start = Instant::now();
    let mut spec = preset("scale-study", None, 8).map_err(|e| e.to_string())?;
    spec.measure_art = false;
    let res = run_study(&spec);
    if let Some(e) = res.iter().find_map(|r| r.error.clone()) {
        return Err(e);
    }
    let means: Vec<f64> = res.iter().map(|r| r.mse_mean).collect();
    let best = means
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|p| p.0)
        .unwrap();
    let runs = res[0].reps;
    let table: Vec<String> = res
        .iter()
        .map(|r| format!("({},{})={:.4}", r.params[0].1, r.params[1].1, r.mse_mean))
        .collect();
    let detail = format!("{runs} runs, {}, argmin index {best}", table.join(" "));
    let ok = runs >= 50 && best != 0 && best != means.len() - 1;
    within(Duration::from_secs(120), start, detail).and_then(|d| ensure(ok, d))
}

fn slope_gap() -> Outcome {
    let start = Instant::now();
    let sizes = [1000.0, 2000.0, 4000.0, 8000.0];
    let spec = study_spec(
        DataSource::Counter3d {
            n_train: 1000,
            n_test: 1000,
        },
        ParameterGrid::cartesian(&[("trees", vec![1.0, 30.0]), ("n", sizes.to_vec())]),
        30,
        9,
    );
    let res = run_study(&spec);
    if let Some(e) = res.iter().find_map(|r| r.error.clone()) {
        return Err(e);
    }
    let slope = |t: f64| {
        let pts: Vec<(f64, f64)> = res
            .iter()
            .filter(|r| r.param("trees") == Some(t))
            .map(|r| (r.param("n").unwrap(), r.mse_mean))
            .collect();
        convergence_slope(&pts).unwrap().0
    };
    let (s1, s30) = (slope(1.0), slope(30.0));
    let detail = format!("slope T=1 {s1:.3}, T=30 {s30:.3}, gap {:.3}", s1 - s30);
    within(Duration::from_secs(600), start, detail).and_then(|d| ensure(s1 - s30 >= 0.05, d))
}

fn same_bytes(ds: &Dataset, cfg: &TrainConfig) -> Result<bool, String> {
    let run = |threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            to_bytes(&train_ensemble(ds, cfg).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())
        })
    };
    Ok(run(1)? == run(8)?)
}

fn determinism() -> Outcome {
    let mut checked = Vec::new();
    for name in PRESETS {
        let spec = preset(name, Some(1), 10).map_err(|e| e.to_string())?;
        let (train, _) = match &spec.source {
            DataSource::Sin16 { n_train, .. } => (gen_sin16(*n_train, 1), ()),
            DataSource::Counter3d { n_train, .. } => (gen_counter3d(*n_train, 1), ()),
            DataSource::Table { data, .. } => (data.clone(), ()),
        };
        for point in &spec.grid.points {
            let mut cfg = spec.base.clone();
            cfg.seed = 10;
            let mut ds = train.clone();
            for (k, v) in spec.grid.names.iter().zip(point) {
                match k.as_str() {
                    "n" => {
                        ds = match &spec.source {
                            DataSource::Counter3d { .. } => gen_counter3d(*v as usize, 1),
                            _ => gen_sin16(*v as usize, 1),
                        }
                    }
                    other => cfg.set_param(other, *v).map_err(|e| e.to_string())?,
                }
            }
            if !same_bytes(&ds, &cfg)? {
                return Err(format!(
                    "preset {name} point {point:?} differs between 1 and 8 threads"
                ));
            }
        }
        checked.push(name);
    }
    let cube = gen_counter3d(4000, 2);
    let extra = [
        (
            "kht-grid",
            TrainConfig {
                trees: 4,
                mode: Mode::Kht,
                seed: 3,
                ..Default::default()
            },
        ),
        (
            "kht-adaptive",
            TrainConfig {
                trees: 5,
                mode: Mode::Kht,
                partition: PartitionKind::Adaptive,
                min_leaf: 400,
                seed: 4,
                ..Default::default()
            },
        ),
        (
            "best-scored",
            TrainConfig {
                trees: 5,
                candidates: 5,
                seed: 5,
                ..Default::default()
            },
        ),
    ];
    for (name, cfg) in extra {
        if !same_bytes(&cube, &cfg)? {
            return Err(format!("{name} differs between 1 and 8 threads"));
        }
        checked.push(name);
    }
    Ok(format!("byte-identical for {}", checked.join(", ")))
}

fn schedule_json(args: &[&str]) -> Result<serde_json::Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hte"))
        .arg("schedule")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

fn schedules() -> Outcome {
    let close = |v: &serde_json::Value, key: &str, want: f64| -> Result<(), String> {
        let got = v[key].as_f64().ok_or(format!("{key} missing"))?;
        if (got - want).abs() <= 1e-12 * want.abs().max(1.0) {
            Ok(())
        } else {
            Err(format!("{key}: got {got}, want {want}"))
        }
    };
    // α = 1, d = 2, δ = 0, n = 10⁴: exponent −1/4 for h̄₀, −3/2 for λ.
    let c0 = schedule_json(&["--n", "10000", "--d", "2", "--class", "c0", "--alpha", "1"])?;
    close(&c0, "h_upper", 0.1)?;
    close(&c0, "lambda", 1e-6)?;
    // α = 1, d = 2, n = 10⁵: λ = 10^(−5/8), h̄₀ = 10^(−1/2), T = 10.
    let c1 = schedule_json(&["--n", "100000", "--d", "2", "--class", "c1", "--alpha", "1"])?;
    close(&c1, "lambda", 0.23713737056616552)?;
    close(&c1, "h_upper", 0.31622776601683794)?;
    close(&c1, "trees", 10.0)?;
    // α = 0.5, d = 4, δ = 0.25, n = 3⁸: exponent −1/(2·0.5·1.25 + 4) = −4/21.
    let c0b = schedule_json(&[
        "--n", "6561", "--d", "4", "--class", "c0", "--alpha", "0.5", "--delta", "0.25",
    ])?;
    close(&c0b, "h_upper", 6561f64.powf(-4.0 / 21.0))?;
    for n in ["10", "1000", "123456789"] {
        let ck = schedule_json(&[
            "--n", n, "--d", "3", "--class", "ck", "--k", "2", "--alpha", "0.5",
        ])?;
        close(&ck, "h_upper", 1.0)?;
        close(&ck, "lambda2", 1.0 / n.parse::<f64>().unwrap())?;
    }
    let missing = Command::new(env!("CARGO_BIN_EXE_hte"))
        .args(["schedule", "--n", "100", "--d", "2", "--class", "c1"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        missing.status.code() == Some(1),
        "C0, C1, Ck anchors; missing α exits 1".into(),
    )
}

fn write_cad_like(path: &Path, n: usize) -> Result<(), String> {
    let mut rng = stream(12, &[]);
    let mut text = String::from(
        "longitude,latitude,age,rooms,bedrooms,population,households,income,ocean,value\n",
    );
    for _ in 0..n {
        let f: Vec<f64> = vec![
            -124.0 + 10.0 * rng.random::<f64>(),
            32.5 + 9.5 * rng.random::<f64>(),
            (1.0 + 51.0 * rng.random::<f64>()).floor(),
            (100.0 + 5000.0 * rng.random::<f64>()).floor(),
            (20.0 + 1000.0 * rng.random::<f64>()).floor(),
            (50.0 + 4000.0 * rng.random::<f64>()).floor(),
            (20.0 + 1000.0 * rng.random::<f64>()).floor(),
            0.5 + 14.5 * rng.random::<f64>(),
            (5.0 * rng.random::<f64>()).floor(),
        ];
        let value = 40_000.0 * f[7] + 2000.0 * (f[0] + 119.0).abs() - 500.0 * f[2]
            + 10_000.0 * f[8]
            + 20_000.0 * rng.random::<f64>();
        let cells: Vec<String> = f
            .iter()
            .chain(std::iter::once(&value))
            .map(|v| v.to_string())
            .collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| e.to_string())
}

fn ingestion() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("cad.csv");
    write_cad_like(&data, 20_000)?;
    let table = hte::data::load_csv(&data, &hte::TargetColumn::Name("value".into()), true)
        .map_err(|e| e.to_string())?;
    let (train, test) = split(&table, 0.8, 1).map_err(|e| e.to_string())?;
    let train_csv = dir.path().join("train.csv");
    let test_csv = dir.path().join("test.csv");
    hte::data::write_csv(&train_csv, &train).map_err(|e| e.to_string())?;
    hte::data::write_csv(&test_csv, &test).map_err(|e| e.to_string())?;
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"train": {"mode": "kht", "partition": "adaptive", "trees": 5, "min_leaf": 1200, "standardize_target": true}}"#,
    )
    .map_err(|e| e.to_string())?;
    let model = dir.path().join("cad.hte");
    let bin = env!("CARGO_BIN_EXE_hte");
    let out = Command::new(bin)
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&train_csv)
        .args(["--target", "y", "--model"])
        .arg(&model)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let out = Command::new(bin)
        .args(["predict", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(&test_csv)
        .arg("--out")
        .arg(dir.path().join("pred.csv"))
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let value: f64 = stdout
        .trim()
        .strip_prefix("mse ")
        .and_then(|v| v.parse().ok())
        .ok_or(format!("no MSE in output `{stdout}`"))?;
    let detail = format!("20000×9 CSV, adaptive KHTE (5, 1200), test MSE {value:.4e}");
    within(Duration::from_secs(300), start, detail).and_then(|d| ensure(value.is_finite(), d))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("rotation validity", rotations),
        ("partition correctness", partitions),
        ("NHT oracle equivalence", nht_oracle),
        ("KRR oracle equivalence", krr_oracle),
        ("Jensen dominance", jensen),
        ("clipping monotonicity", clipping),
        ("ensemble vs single, sin16", ensemble_vs_single),
        ("scale-study unimodality", scale_unimodality),
        ("counterexample slope gap", slope_gap),
        ("determinism under parallelism", determinism),
        ("schedule correctness", schedules),
        ("end-to-end ingestion", ingestion),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
