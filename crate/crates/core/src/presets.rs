//! Named benchmark studies on the synthetic generators.

use crate::config::TrainConfig;
use crate::error::{HteError, Result};
use crate::evaluation::{DataSource, ParameterGrid, StudySpec};

pub const PRESETS: [&str; 5] = [
    "sin16",
    "t-study",
    "counter3d",
    "scale-study",
    "scale-figure",
];

/// Naive grid ensemble with `(s_min, s_max) = (0, 1)`.
fn naive_base() -> TrainConfig {
    TrainConfig {
        trees: 10,
        s_min: 0.0,
        s_max: 1.0,
        ..Default::default()
    }
}

fn scale_pairs(pairs: &[(f64, f64)]) -> ParameterGrid {
    ParameterGrid::explicit(
        &["s_min", "s_max"],
        pairs.iter().map(|&(a, b)| vec![a, b]).collect(),
    )
}

/// Builds the study behind a preset name. `reps` overrides the default count.
pub fn preset(name: &str, reps: Option<usize>, seed: u64) -> Result<StudySpec> {
    let (source, grid, default_reps, runs_per_dataset) = match name {
        // MSE against T for several training sizes, 2000 test points.
        "sin16" => (
            DataSource::Sin16 {
                n_train: 2000,
                n_test: 2000,
            },
            ParameterGrid::cartesian(&[
                ("n", vec![2000.0, 3000.0, 4000.0, 5000.0]),
                ("trees", vec![1.0, 5.0, 10.0, 20.0]),
            ]),
            300,
            1,
        ),
        "t-study" => (
            DataSource::Sin16 {
                n_train: 2000,
                n_test: 2000,
            },
            ParameterGrid::cartesian(&[("trees", vec![1.0, 5.0, 10.0, 20.0])]),
            30,
            1,
        ),
        "counter3d" => (
            DataSource::Counter3d {
                n_train: 1000,
                n_test: 1000,
            },
            ParameterGrid::cartesian(&[
                ("n", vec![1000.0, 2000.0, 4000.0, 8000.0]),
                ("trees", vec![1.0, 2.0, 5.0, 10.0, 30.0]),
            ]),
            30,
            1,
        ),
        // Ten datasets with ten runs each.
        "scale-study" => (
            DataSource::Sin16 {
                n_train: 500,
                n_test: 1000,
            },
            scale_pairs(&[(-1.0, 1.0), (0.0, 2.0), (1.0, 3.0), (2.0, 4.0), (3.0, 5.0)]),
            100,
            10,
        ),
        // Single-run comparison of three scale ranges.
        "scale-figure" => (
            DataSource::Sin16 {
                n_train: 500,
                n_test: 1000,
            },
            scale_pairs(&[(0.0, 2.0), (1.0, 3.0), (2.0, 4.0)]),
            1,
            1,
        ),
        other => {
            return Err(HteError::config(
                "preset",
                format!(
                    "unknown preset `{other}`; known presets: {}",
                    PRESETS.join(", ")
                ),
            ))
        }
    };
    Ok(StudySpec {
        source,
        base: naive_base(),
        grid,
        repetitions: reps.unwrap_or(default_reps),
        runs_per_dataset,
        seed,
        measure_art: true,
    })
}
