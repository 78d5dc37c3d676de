//! Random histogram transforms `x ↦ R·S·x + b`.
//!
//! `R` is a random rotation, `S = diag(s)` a random stretching with
//! log-uniform (Jeffreys) factors and `b` a random translation in `[0,1)^d`.
//! The unit integer grid in transformed space induces a partition of the
//! input space whose cells all have volume `∏ 1/s_i`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, HteError, Result};

/// Tolerance used when validating rotations handed to [`HistogramTransform::from_parts`].
const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTransform {
    rotation: Array2<f64>,
    scales: Vec<f64>,
    translation: Vec<f64>,
    h_lower: f64,
    h_upper: f64,
}

/// Draws a uniformly distributed rotation matrix (orthogonal, `det = +1`).
///
/// A `d × d` matrix of standard normals is factored as `M = Q·W` by Householder
/// reflections, the signs are fixed so that `W` has a positive diagonal, and if
/// `det(Q) = -1` the first column of `Q` is negated. For `d = 1` the only
/// rotation is `[1]` and no randomness is consumed.
pub fn sample_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array2<f64> {
    assert!(d >= 1, "dimension must be at least 1");
    if d == 1 {
        return Array2::from_elem((1, 1), 1.0);
    }
    let mut m = Array2::<f64>::zeros((d, d));
    for v in m.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    householder_rotation(m)
}

/// Orthogonal factor of `m = Q·W` with `W` positive on the diagonal, then
/// corrected to unit determinant.
fn householder_rotation(mut a: Array2<f64>) -> Array2<f64> {
    let d = a.nrows();
    let mut q = Array2::<f64>::eye(d);
    // det(Q) = (-1)^(reflections + sign flips)
    let mut negative_det = false;
    let mut v = vec![0.0; d];

    for k in 0..d.saturating_sub(1) {
        let norm = (k..d).map(|i| a[[i, k]] * a[[i, k]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[[k, k]] > 0.0 { -norm } else { norm };
        for i in k..d {
            v[i] = a[[i, k]];
        }
        v[k] -= alpha;
        let vnorm = (k..d).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in v[k..].iter_mut() {
            *x /= vnorm;
        }
        // A ← H A on rows k.., columns k..
        for j in k..d {
            let dot: f64 = (k..d).map(|i| v[i] * a[[i, j]]).sum();
            for i in k..d {
                a[[i, j]] -= 2.0 * v[i] * dot;
            }
        }
        // Q ← Q H on columns k..
        for r in 0..d {
            let dot: f64 = (k..d).map(|i| q[[r, i]] * v[i]).sum();
            for i in k..d {
                q[[r, i]] -= 2.0 * dot * v[i];
            }
        }
        negative_det = !negative_det;
    }

    for k in 0..d {
        if a[[k, k]] < 0.0 {
            for r in 0..d {
                q[[r, k]] = -q[[r, k]];
            }
            negative_det = !negative_det;
        }
    }
    if negative_det {
        for r in 0..d {
            q[[r, 0]] = -q[[r, 0]];
        }
    }
    q
}

/// Draws a full histogram transform with bin widths in `[h_lower, h_upper]`.
pub fn sample_transform<R: Rng + ?Sized>(
    d: usize,
    h_lower: f64,
    h_upper: f64,
    rng: &mut R,
) -> Result<HistogramTransform> {
    validate_widths(h_lower, h_upper)?;
    let rotation = sample_rotation(d, rng);
    sample_transform_with_rotation(rotation, h_lower, h_upper, rng)
}

/// Draws stretching and translation around a fixed rotation.
pub fn sample_transform_with_rotation<R: Rng + ?Sized>(
    rotation: Array2<f64>,
    h_lower: f64,
    h_upper: f64,
    rng: &mut R,
) -> Result<HistogramTransform> {
    validate_widths(h_lower, h_upper)?;
    let d = rotation.nrows();
    let s_lo = 1.0 / h_upper;
    let s_hi = 1.0 / h_lower;
    let scales = (0..d)
        .map(|_| {
            if h_lower == h_upper {
                s_lo
            } else {
                let (lo, hi) = (s_lo.ln(), s_hi.ln());
                let u: f64 = rng.random();
                (lo + (hi - lo) * u).exp().clamp(s_lo, s_hi)
            }
        })
        .collect();
    let translation = (0..d).map(|_| rng.random::<f64>()).collect();
    Ok(HistogramTransform {
        rotation,
        scales,
        translation,
        h_lower,
        h_upper,
    })
}

fn validate_widths(h_lower: f64, h_upper: f64) -> Result<()> {
    if !(h_lower.is_finite() && h_lower > 0.0) {
        return Err(HteError::config(
            "h_lower",
            format!("must be positive and finite, got {h_lower}"),
        ));
    }
    if !(h_upper.is_finite() && h_lower <= h_upper) {
        return Err(HteError::config(
            "h_upper",
            format!("must be finite and ≥ h_lower ({h_lower}), got {h_upper}"),
        ));
    }
    Ok(())
}

/// Maximum absolute entry of `RᵀR − I`.
pub fn orthogonality_error(r: ArrayView2<f64>) -> f64 {
    let rtr = r.t().dot(&r);
    let d = r.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((rtr[[i, j]] - target).abs());
        }
    }
    worst
}

impl HistogramTransform {
    /// Assembles a transform from stored parts, checking every invariant.
    pub fn from_parts(
        rotation: Array2<f64>,
        scales: Vec<f64>,
        translation: Vec<f64>,
        h_lower: f64,
        h_upper: f64,
    ) -> Result<Self> {
        validate_widths(h_lower, h_upper)?;
        let d = rotation.nrows();
        if rotation.ncols() != d || d == 0 {
            return Err(HteError::data("rotation must be a non-empty square matrix"));
        }
        check_dim(d, scales.len())?;
        check_dim(d, translation.len())?;
        if orthogonality_error(rotation.view()) > ROTATION_TOL {
            return Err(HteError::data("rotation matrix is not orthogonal"));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(HteError::data("stretching factors must be positive"));
        }
        if translation.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(HteError::data("translation entries must lie in [0, 1)"));
        }
        Ok(HistogramTransform {
            rotation,
            scales,
            translation,
            h_lower,
            h_upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn rotation(&self) -> &Array2<f64> {
        &self.rotation
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn h_lower(&self) -> f64 {
        self.h_lower
    }

    pub fn h_upper(&self) -> f64 {
        self.h_upper
    }

    /// Bin widths `h = 1/s` in input-space units.
    pub fn bin_widths(&self) -> Vec<f64> {
        self.scales.iter().map(|s| 1.0 / s).collect()
    }

    /// `R·(S·x) + b`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.rotation.row(i);
            let mut acc = 0.0;
            for (j, &r) in row.iter().enumerate() {
                acc += r * (self.scales[j] * x[j]);
            }
            *o = acc + self.translation[i];
        }
    }

    /// Integer bin index `⌊H(x)⌋`, flooring toward −∞.
    pub fn bin_key(&self, x: &[f64]) -> Result<Vec<i64>> {
        check_dim(self.dim(), x.len())?;
        let mut buf = vec![0.0; self.dim()];
        let mut key = vec![0; self.dim()];
        self.bin_key_into(x, &mut buf, &mut key);
        Ok(key)
    }

    pub(crate) fn bin_key_into(&self, x: &[f64], buf: &mut [f64], key: &mut [i64]) {
        self.apply_into(x, buf);
        for (k, v) in key.iter_mut().zip(buf.iter()) {
            *k = v.floor() as i64;
        }
    }

    /// Lebesgue volume of every cell: `1 / det(R·S) = ∏ 1/s_i`.
    pub fn cell_volume(&self) -> f64 {
        self.scales.iter().map(|s| 1.0 / s).product()
    }
}
