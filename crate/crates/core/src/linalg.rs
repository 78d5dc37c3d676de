//! Dense SPD solves and Gaussian Gram matrices for the kernel cells.

use ndarray::{Array2, ArrayView2};

use crate::error::{HteError, Result};

/// Jitter multipliers tried after a plain factorization fails.
const JITTER_STEPS: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolveReport {
    pub solution: Vec<f64>,
    /// Amount added to the diagonal before the successful factorization.
    pub jitter_used: f64,
    /// Number of escalation steps taken (0 when no jitter was needed).
    pub escalations: usize,
    /// `‖(A + jitter·I)x − b‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// `K_ab = exp(−‖x_a − x_b‖² / γ²)`.
pub fn gaussian_gram(x: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    let inv = 1.0 / (gamma * gamma);
    let mut k = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        k[[a, a]] = 1.0;
        let xa = x.row(a);
        for b in 0..a {
            let dist2: f64 = xa
                .iter()
                .zip(x.row(b).iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            let v = (-dist2 * inv).exp();
            k[[a, b]] = v;
            k[[b, a]] = v;
        }
    }
    k
}

/// Gaussian kernel between two points.
#[inline]
pub fn gaussian_kernel(a: &[f64], b: &[f64], inv_gamma2: f64) -> f64 {
    let dist2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-dist2 * inv_gamma2).exp()
}

/// Lower Cholesky factor stored densely, row-major.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &Array2<f64>, jitter: f64) -> Option<Self> {
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = ri.iter().zip(rj).map(|(p, q)| p * q).sum();
                let mut v = a[[i, j]] - dot;
                if i == j {
                    v += jitter;
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&y[..i]).map(|(p, q)| p * q).sum();
            y[i] = (y[i] - dot) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= self.l[k * n + i] * y[k];
            }
            y[i] = acc / self.l[i * n + i];
        }
        y
    }
}

fn residual(a: &Array2<f64>, jitter: f64, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, bi))| {
            let ax: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + jitter * x[i];
            bi - ax
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
///
/// When the factorization breaks down, `ε·trace(A)/n` is added to the
/// diagonal with `ε` stepping from `1e-12` to `1e-6` by factors of ten. One
/// round of iterative refinement follows the triangular solves.
pub fn solve_spd(a: &Array2<f64>, b: &[f64]) -> Result<SpdSolveReport> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(HteError::DimensionMismatch {
            expected: n,
            actual: if a.ncols() != n { a.ncols() } else { b.len() },
        });
    }
    if n == 0 {
        return Ok(SpdSolveReport {
            solution: Vec::new(),
            jitter_used: 0.0,
            escalations: 0,
            relative_residual: 0.0,
        });
    }
    let scale = a.diag().sum() / n as f64;

    let mut attempt = Cholesky::factor(a, 0.0).map(|c| (c, 0.0, 0));
    if attempt.is_none() {
        for (step, eps) in JITTER_STEPS.iter().enumerate() {
            let jitter = eps * scale;
            if let Some(c) = Cholesky::factor(a, jitter) {
                attempt = Some((c, jitter, step + 1));
                break;
            }
        }
    }
    let Some((chol, jitter, escalations)) = attempt else {
        return Err(HteError::IllConditioned {
            max_jitter: JITTER_STEPS[JITTER_STEPS.len() - 1] * scale,
        });
    };

    let mut x = chol.solve(b);
    let r = residual(a, jitter, &x, b);
    let dx = chol.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    let bn = norm(b);
    let rn = norm(&residual(a, jitter, &x, b));
    Ok(SpdSolveReport {
        solution: x,
        jitter_used: jitter,
        escalations,
        relative_residual: if bn > 0.0 { rn / bn } else { rn },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gram_entries() {
        let x = array![[0.0, 0.0], [0.6, 0.8], [3.0, 4.0]];
        let k = gaussian_gram(x.view(), 1.0);
        for i in 0..3 {
            assert_eq!(k[[i, i]], 1.0);
        }
        assert!((k[[0, 1]] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k[[0, 1]] - 0.3678794).abs() < 1e-7);
        assert_eq!(k[[1, 2]], k[[2, 1]]);
        let flat = gaussian_gram(x.view(), 1e12);
        assert!(flat.iter().all(|v| (v - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn identity_solve_is_exact() {
        let r = solve_spd(&Array2::eye(3), &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(r.solution, vec![1.0, -2.0, 3.5]);
        assert_eq!(r.jitter_used, 0.0);
        assert_eq!(r.escalations, 0);
    }

    #[test]
    fn two_by_two_hand_inverse() {
        let r = solve_spd(&array![[2.0, 1.0], [1.0, 2.0]], &[1.0, 1.0]).unwrap();
        for v in r.solution {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_matrix_fails_after_escalation() {
        let err = solve_spd(&Array2::zeros((3, 3)), &[1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, HteError::IllConditioned { .. }));
    }

    #[test]
    fn singular_psd_matrix_needs_jitter() {
        // Rank-one matrix: Cholesky breaks down without help.
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let r = solve_spd(&a, &[1.0, 1.0]).unwrap();
        assert!(r.jitter_used > 0.0);
        assert!(r.escalations >= 1);
        assert!(r.relative_residual <= 1e-8);
    }
}
