use serde::{Deserialize, Serialize};

use crate::error::{HteError, Result};
use crate::local_models::{ClipRule, FallbackRule};

/// Local regressor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cell means.
    #[default]
    Nht,
    /// Clipped Gaussian kernel ridge regression per cell.
    Kht,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    /// Unit grid of a random histogram transform.
    #[default]
    Grid,
    /// Random rotation followed by recursive median splits.
    Adaptive,
}

/// Scale offsets `(s_min, s_max)` in natural-log units around `log ŝ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePair(pub f64, pub f64);

impl ScalePair {
    /// Bin-width bounds `(h̲₀, h̄₀) = (ĥ·e^{−s_max}, ĥ·e^{−s_min})`.
    pub fn widths(self, h_hat: f64) -> (f64, f64) {
        (h_hat * (-self.1).exp(), h_hat * (-self.0).exp())
    }
}

/// Candidate grid used by best-scored selection when none is configured.
pub fn default_candidate_scales() -> Vec<ScalePair> {
    vec![
        ScalePair(-1.0, 1.0),
        ScalePair(0.0, 2.0),
        ScalePair(1.0, 3.0),
        ScalePair(2.0, 4.0),
        ScalePair(3.0, 5.0),
    ]
}

fn default_trees() -> usize {
    10
}
fn default_candidates() -> usize {
    1
}
fn default_s_max() -> f64 {
    1.0
}
fn default_min_leaf() -> usize {
    1200
}
fn default_gamma() -> f64 {
    1.0
}
fn default_q() -> f64 {
    1.0
}
fn default_kernel_min_cell() -> usize {
    3
}
fn default_validation_fraction() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}

/// Everything that determines a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub partition: PartitionKind,
    /// Number of ensemble members `T`.
    #[serde(default = "default_trees")]
    pub trees: usize,
    /// Candidates per member; values above one enable best-scored selection.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// One scale pair per candidate. Defaults to the five-pair grid.
    #[serde(default)]
    pub candidate_scales: Option<Vec<ScalePair>>,
    #[serde(default)]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    /// Maximum leaf size `m` of adaptive trees.
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Ridge weight `λ₂`; `None` means `1/n` so that the normal equations read `(K + I)α = y`.
    #[serde(default)]
    pub lambda2: Option<f64>,
    /// Bin-width penalty weight `λ₁` and exponent `q`; recorded, not used by fitting.
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub clip: ClipRule,
    #[serde(default)]
    pub fallback: FallbackRule,
    /// Kernel cells with fewer points predict their mean instead.
    #[serde(default = "default_kernel_min_cell")]
    pub kernel_min_cell: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_true")]
    pub standardize_features: bool,
    #[serde(default)]
    pub standardize_target: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees < 1 {
            return Err(HteError::config("trees", "must be ≥ 1"));
        }
        if self.candidates < 1 {
            return Err(HteError::config("candidates", "must be ≥ 1"));
        }
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.s_min < self.s_max) {
            return Err(HteError::config(
                "s_min",
                format!("must be < s_max (got {} and {})", self.s_min, self.s_max),
            ));
        }
        if self.candidates > 1 {
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                return Err(HteError::config(
                    "validation_fraction",
                    "must lie in (0, 1) when candidates > 1",
                ));
            }
            if self.partition == PartitionKind::Adaptive {
                return Err(HteError::config(
                    "candidates",
                    "best-scored selection applies to grid partitions only",
                ));
            }
            let pairs = self.scale_candidates();
            if pairs.len() != self.candidates {
                return Err(HteError::config(
                    "candidate_scales",
                    format!(
                        "has {} pairs but candidates = {}",
                        pairs.len(),
                        self.candidates
                    ),
                ));
            }
            if let Some(p) = pairs.iter().find(|p| !(p.0 < p.1)) {
                return Err(HteError::config(
                    "candidate_scales",
                    format!("pair ({}, {}) needs s_min < s_max", p.0, p.1),
                ));
            }
        }
        if self.min_leaf < 1 {
            return Err(HteError::config("min_leaf", "must be ≥ 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(HteError::config("gamma", "must be positive"));
        }
        if let Some(l) = self.lambda2 {
            if !(l > 0.0 && l.is_finite()) {
                return Err(HteError::config("lambda2", "must be positive"));
            }
        }
        if let ClipRule::Fixed(m) = self.clip {
            if !(m > 0.0) {
                return Err(HteError::config("clip", "fixed bound must be positive"));
            }
        }
        Ok(())
    }

    /// Scale pairs of the candidates, in candidate order.
    pub fn scale_candidates(&self) -> Vec<ScalePair> {
        if self.candidates == 1 {
            return vec![ScalePair(self.s_min, self.s_max)];
        }
        self.candidate_scales
            .clone()
            .unwrap_or_else(default_candidate_scales)
    }

    pub fn lambda2_for(&self, n: usize) -> f64 {
        self.lambda2.unwrap_or(1.0 / n as f64)
    }

    /// Sets a numeric field by name; used by parameter studies and CLI overrides.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(HteError::config(
                    name,
                    format!("expects a non-negative integer, got {v}"),
                ))
            }
        };
        match name {
            "trees" | "T" => self.trees = as_count(value)?,
            "candidates" => self.candidates = as_count(value)?,
            "s_min" => self.s_min = value,
            "s_max" => self.s_max = value,
            "min_leaf" | "m" => self.min_leaf = as_count(value)?,
            "gamma" => self.gamma = value,
            "lambda2" => self.lambda2 = Some(value),
            "lambda1" => self.lambda1 = value,
            "q" => self.q = value,
            "kernel_min_cell" => self.kernel_min_cell = as_count(value)?,
            "validation_fraction" => self.validation_fraction = value,
            "clip" => self.clip = ClipRule::Fixed(value),
            "seed" => self.seed = value as u64,
            _ => {
                return Err(HteError::config(
                    name,
                    "is not a numeric training parameter",
                ))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.trees, 10);
        assert_eq!((c.s_min, c.s_max), (0.0, 1.0));
        assert_eq!(c.validation_fraction, 0.3);
        assert!(c.standardize_features && !c.standardize_target);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"tres": 3}"#).is_err());
    }

    #[test]
    fn zero_trees_names_the_field() {
        let c: TrainConfig = serde_json::from_str(r#"{"trees": 0}"#).unwrap();
        match c.validate() {
            Err(HteError::Config { field, .. }) => assert_eq!(field, "trees"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn candidate_grid_must_match_count() {
        let mut c = TrainConfig {
            candidates: 5,
            ..Default::default()
        };
        c.validate().unwrap();
        c.candidates = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scale_pair_widths() {
        let (lo, hi) = ScalePair(0.0, 1.0).widths(2.0);
        assert_eq!(hi, 2.0);
        assert!((lo - 2.0 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_json() {
        let c = TrainConfig {
            mode: Mode::Kht,
            clip: ClipRule::Fixed(2.5),
            lambda2: Some(1e-3),
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&s).unwrap(), c);
    }
}
