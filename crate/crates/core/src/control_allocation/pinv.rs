//! Moore-Penrose pseudoinverse through a one-sided Jacobi SVD.
//!
//! Mixing matrices are at most 10×10, so Hestenes' method is plenty: it
//! orthogonalizes the columns of `A` with plane rotations, leaving
//! `A V = U Σ`. Singular values below the cutoff are dropped, which is what
//! lets rank-deficient custom mixers load without failing.

use nalgebra::{DMatrix, DVector};

use super::AllocationError;

const MAX_SWEEPS: usize = 60;

/// Thin SVD of a matrix with at least as many rows as columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Default singular-value cutoff: `σ_max · 64 · ε`.
pub fn default_tolerance(sigma_max: f64) -> f64 {
    sigma_max * 64.0 * f64::EPSILON
}

fn check_finite(a: &DMatrix<f64>) -> Result<(), AllocationError> {
    match a.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(AllocationError::InvalidMatrix(format!(
            "entry ({}, {}) is not finite",
            idx % a.nrows(),
            idx / a.nrows()
        ))),
        None => Ok(()),
    }
}

/// One-sided Jacobi SVD. Requires `rows >= cols`; singular values come back
/// unsorted.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    assert!(m >= n, "jacobi_svd expects a tall or square matrix");
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = DVector::<f64>::zeros(n);
    let mut u = DMatrix::<f64>::zeros(m, n);
    for j in 0..n {
        let norm = w.column(j).norm();
        sigma[j] = norm;
        if norm > 0.0 {
            u.set_column(j, &(w.column(j) / norm));
        }
    }
    Svd {
        u,
        singular_values: sigma,
        v,
    }
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Pseudoinverse plus the rank found at the cutoff that was applied.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub tolerance: f64,
}

/// Moore-Penrose pseudoinverse of an arbitrary real matrix.
///
/// `sv_tolerance = None` uses [`default_tolerance`].
pub fn pseudoinverse(
    a: &DMatrix<f64>,
    sv_tolerance: Option<f64>,
) -> Result<PseudoInverse, AllocationError> {
    check_finite(a)?;
    if let Some(tol) = sv_tolerance {
        if tol.is_nan() || tol < 0.0 {
            return Err(AllocationError::InvalidMatrix(format!(
                "singular value tolerance must be non-negative, got {tol}"
            )));
        }
    }
    let (m, n) = a.shape();
    if m < n {
        // pinv(A) = pinv(Aᵀ)ᵀ
        let t = pseudoinverse(&a.transpose(), sv_tolerance)?;
        return Ok(PseudoInverse {
            matrix: t.matrix.transpose(),
            ..t
        });
    }

    let svd = jacobi_svd(a);
    let sigma_max = svd.singular_values.max();
    let tol = sv_tolerance.unwrap_or_else(|| default_tolerance(sigma_max));
    let mut out = DMatrix::<f64>::zeros(n, m);
    let mut rank = 0;
    for j in 0..n {
        let s = svd.singular_values[j];
        if s > tol && s > 0.0 {
            rank += 1;
            out += (svd.v.column(j) / s) * svd.u.column(j).transpose();
        }
    }
    Ok(PseudoInverse {
        matrix: out,
        rank,
        tolerance: tol,
    })
}

/// Residuals of the four Moore-Penrose conditions, as ∞-norms:
/// `‖A X A − A‖`, `‖X A X − X‖`, `‖(A X)ᵀ − A X‖`, `‖(X A)ᵀ − X A‖`.
pub fn moore_penrose_residuals(a: &DMatrix<f64>, x: &DMatrix<f64>) -> [f64; 4] {
    let ax = a * x;
    let xa = x * a;
    [
        inf_norm(&(&ax * a - a)),
        inf_norm(&(&xa * x - x)),
        inf_norm(&(ax.transpose() - &ax)),
        inf_norm(&(xa.transpose() - &xa)),
    ]
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_block() {
        let mut m = DMatrix::<f64>::zeros(6, 10);
        for i in 0..6 {
            m[(i, i)] = 1.0;
        }
        let p = pseudoinverse(&m, None).unwrap();
        assert_eq!(p.rank, 6);
        assert_eq!(p.matrix.shape(), (10, 6));
        for i in 0..10 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(p.matrix[(i, j)], expect);
            }
        }
    }

    #[test]
    fn scaled_identity_block() {
        let mut m = DMatrix::<f64>::zeros(6, 10);
        for i in 0..6 {
            m[(i, i)] = 2.0;
        }
        let p = pseudoinverse(&m, None).unwrap();
        for i in 0..6 {
            assert_eq!(p.matrix[(i, i)], 0.5);
        }
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let p = pseudoinverse(&DMatrix::zeros(6, 10), None).unwrap();
        assert_eq!(p.rank, 0);
        assert_eq!(p.matrix, DMatrix::zeros(10, 6));
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::<f64>::zeros(6, 10);
        m[(2, 3)] = f64::NAN;
        match pseudoinverse(&m, None) {
            Err(AllocationError::InvalidMatrix(msg)) => assert!(msg.contains("(2, 3)")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(pseudoinverse(&DMatrix::zeros(2, 2), Some(-1.0)).is_err());
    }

    #[test]
    fn rank_one_outer_product() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![4.0, 5.0]);
        let m = &a * b.transpose();
        let p = pseudoinverse(&m, None).unwrap();
        assert_eq!(p.rank, 1);
        // pinv(a bᵀ) = b aᵀ / (‖a‖² ‖b‖²)
        let expect = &b * a.transpose() / (14.0 * 41.0);
        assert!((p.matrix - expect).amax() < 1e-15);
    }

    #[test]
    fn svd_reconstructs() {
        let m = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 3.0, //
            -1.0, 0.5, 2.0, //
            0.0, 1.0, -4.0, //
            2.0, 2.0, 2.0,
        ]);
        let svd = jacobi_svd(&m);
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * svd.v.transpose();
        assert!((rebuilt - m).amax() < 1e-13);
    }
}
