//! Parameter schedules of the convergence-rate results, evaluated for a
//! concrete sample size.
//!
//! `delta` stands in for the slack constant of the rates. Its exact value
//! depends on the bin width it is meant to choose, so it is taken as a user
//! constant; `0` is its limit as `n → ∞`.

use serde::{Deserialize, Serialize};

use crate::error::{HteError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum Smoothness {
    /// Hölder continuous regression function, naive estimator.
    C0 { alpha: f64 },
    /// Hölder continuous gradient, naive ensemble.
    C1 { alpha: f64 },
    /// `k ≥ 2` Hölder derivatives, kernel estimator.
    Ck { k: u32, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Penalty weight `λ` (the bin-width weight `λ₁` for the kernel schedule).
    pub lambda: f64,
    /// Upper bin width `h̄₀`.
    pub h_upper: f64,
    /// Suggested ensemble size, when the rate prescribes one.
    pub trees: Option<f64>,
    /// Ridge weight `λ₂` of the kernel schedule.
    pub lambda2: Option<f64>,
    /// Kernel bandwidth `γ` of the kernel schedule.
    pub gamma: Option<f64>,
}

pub fn theoretical_schedule(
    n: u64,
    d: usize,
    smoothness: Smoothness,
    delta: f64,
) -> Result<Schedule> {
    if n < 2 {
        return Err(HteError::config("n", "must be ≥ 2"));
    }
    if d < 1 {
        return Err(HteError::config("d", "must be ≥ 1"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(HteError::config("delta", "must lie in [0, 1)"));
    }
    let alpha = match smoothness {
        Smoothness::C0 { alpha } | Smoothness::C1 { alpha } | Smoothness::Ck { alpha, .. } => alpha,
    };
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(HteError::config(
            "alpha",
            format!("must lie in (0, 1], got {alpha}"),
        ));
    }
    let n = n as f64;
    let d = d as f64;
    Ok(match smoothness {
        Smoothness::C0 { alpha } => {
            let denom = 2.0 * alpha * (1.0 + delta) + d;
            Schedule {
                lambda: n.powf(-2.0 * (alpha + d) / denom),
                h_upper: n.powf(-1.0 / denom),
                trees: None,
                lambda2: None,
                gamma: None,
            }
        }
        Smoothness::C1 { alpha } => {
            let denom = 2.0 * (1.0 + alpha) * (2.0 - delta) + d;
            Schedule {
                lambda: n.powf(-1.0 / (2.0 * (1.0 + alpha) + 2.0 * d)),
                h_upper: n.powf(-1.0 / denom),
                trees: Some(n.powf(2.0 * alpha / denom)),
                lambda2: None,
                gamma: None,
            }
        }
        Smoothness::Ck { k, alpha } => {
            if k < 2 {
                return Err(HteError::config("k", format!("must be ≥ 2, got {k}")));
            }
            let rate = n.powf(-1.0 / (2.0 * (k as f64 + alpha) + d));
            Schedule {
                lambda: rate,
                h_upper: 1.0,
                trees: None,
                lambda2: Some(1.0 / n),
                gamma: Some(rate),
            }
        }
    })
}
