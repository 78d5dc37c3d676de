//! Histogram transform ensembles for regression.
//!
//! The input space is partitioned by randomly rotated, stretched and
//! translated histograms (or by median splits of a randomly rotated space),
//! every cell gets a constant or a Gaussian kernel ridge regressor, and the
//! predictions of `T` independently drawn partitions are averaged.
//!
//! ```no_run
//! use hte::{data::gen_sin16, train_ensemble, TrainConfig};
//!
//! let train = gen_sin16(2000, 1);
//! let test = gen_sin16(2000, 2);
//! let model = train_ensemble(&train, &TrainConfig { trees: 10, ..Default::default() }).unwrap();
//! let pred = model.predict(test.x.view()).unwrap();
//! println!("test mse {}", hte::evaluation::mse(&pred, &test.y).unwrap());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod local_models;
pub mod model_io;
pub mod partition;
pub mod presets;
pub mod rng;
pub mod schedule;
pub mod transform;

pub use config::{Mode, PartitionKind, ScalePair, TrainConfig};
pub use data::{Dataset, Standardizer, TargetColumn};
pub use ensemble::{train_ensemble, EnsembleModel, Member};
pub use error::{ErrorKind, HteError, Result};
pub use schedule::{theoretical_schedule, Schedule, Smoothness};
