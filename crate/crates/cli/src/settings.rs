//! JSON configuration file accepted by `train`, `study` and `bench`.

use std::fs;
use std::path::{Path, PathBuf};

use hte::{HteError, Result, TargetColumn, TrainConfig};
use serde::{Deserialize, Serialize};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetColumn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_header: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Sin16 {
        n_train: usize,
        n_test: usize,
    },
    Counter3d {
        n_train: usize,
        n_test: usize,
    },
    Csv {
        path: PathBuf,
        target: TargetColumn,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub source: SourceConfig,
    /// Cartesian axes, first axis varying slowest.
    #[serde(default)]
    pub axes: Vec<AxisConfig>,
    /// Explicit points; used instead of `axes` when present.
    #[serde(default)]
    pub points: Option<ExplicitPoints>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_runs")]
    pub runs_per_dataset: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub measure_art: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPoints {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn default_reps() -> usize {
    10
}

fn default_runs() -> usize {
    1
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            HteError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: CliConfig = serde_json::from_str(&text)
            .map_err(|e| HteError::config("config", format!("{}: {e}", path.display())))?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Parses a `key=value` override.
pub fn parse_override(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_top_level_keys_rejected() {
        assert!(serde_json::from_str::<CliConfig>(r#"{"trian": {}}"#).is_err());
        assert!(serde_json::from_str::<CliConfig>(r#"{"train": {"trees": 3}}"#).is_ok());
    }

    #[test]
    fn study_section_parses() {
        let cfg: CliConfig = serde_json::from_str(
            r#"{"study": {"source": {"kind": "sin16", "n_train": 100, "n_test": 50},
                          "axes": [{"name": "trees", "values": [1, 2]}], "reps": 2}}"#,
        )
        .unwrap();
        let s = cfg.study.unwrap();
        assert_eq!(s.axes[0].values, vec![1.0, 2.0]);
        assert!(s.measure_art);
    }

    #[test]
    fn overrides() {
        assert_eq!(parse_override("trees=5").unwrap(), ("trees".into(), 5.0));
        assert!(parse_override("trees").is_err());
        assert!(parse_override("trees=x").is_err());
    }
}
