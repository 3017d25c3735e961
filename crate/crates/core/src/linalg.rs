//! Dense spectral factorizations shared by the exact and approximate paths.
//!
//! Everything here is a deterministic function of its input: no randomized
//! sketching, and the backend runs single-threaded.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Default absolute eigenvalue cutoff for Gram-matrix truncation.
pub const DEFAULT_EIG_THRESHOLD: f64 = 1e-8;

/// Eigenpairs of a symmetric PSD matrix with every eigenvalue at or below
/// `threshold_used` discarded.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedEig {
    /// Retained eigenvalues, descending, all `> threshold_used`.
    pub eigenvalues: Vec<f64>,
    /// Column-orthonormal, one column per retained eigenvalue.
    pub eigenvectors: Mat<f64>,
    pub threshold_used: f64,
}

impl TruncatedEig {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// `E Λ Eᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let scaled = scale_columns(self.eigenvectors.as_ref(), &self.eigenvalues);
        &scaled * self.eigenvectors.transpose()
    }

    /// `E Λ⁻¹ Eᵀ`, the pseudoinverse of the truncated matrix.
    pub fn pseudo_inverse(&self) -> Mat<f64> {
        let inv: Vec<f64> = self.eigenvalues.iter().map(|l| 1.0 / l).collect();
        let scaled = scale_columns(self.eigenvectors.as_ref(), &inv);
        &scaled * self.eigenvectors.transpose()
    }
}

/// Thin SVD with singular values at or below the threshold dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub left_vectors: Mat<f64>,
    /// Descending, all `> threshold_used`.
    pub singular_values: Vec<f64>,
    pub right_vectors: Mat<f64>,
    pub threshold_used: f64,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let scaled = scale_columns(self.left_vectors.as_ref(), &self.singular_values);
        &scaled * self.right_vectors.transpose()
    }
}

/// Economy QR factors `B = Q R`.
#[derive(Clone, Debug)]
pub struct EconomyQr {
    /// `r × min(r, s)` with orthonormal columns.
    pub q: Mat<f64>,
    /// `min(r, s) × s` upper trapezoidal.
    pub r: Mat<f64>,
}

pub fn ensure_finite(m: MatRef<'_, f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFiniteInput(what));
            }
        }
    }
    Ok(())
}

pub fn ensure_square(m: MatRef<'_, f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::mismatch(context, m.nrows(), m.ncols()));
    }
    Ok(())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Multiplies column `j` of `m` by `factors[j]`.
pub fn scale_columns(m: MatRef<'_, f64>, factors: &[f64]) -> Mat<f64> {
    debug_assert_eq!(m.ncols(), factors.len());
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * factors[j])
}

/// Multiplies row `i` of `m` by `factors[i]`.
pub fn scale_rows(m: MatRef<'_, f64>, factors: &[f64]) -> Mat<f64> {
    debug_assert_eq!(m.nrows(), factors.len());
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * factors[i])
}

/// Largest singular value; 0 for an empty matrix.
pub fn spectral_norm(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values()
        .ok()
        .and_then(|s| s.first().copied())
        .unwrap_or(f64::NAN)
}

/// `‖M − I‖₂`.
pub fn distance_from_identity(m: MatRef<'_, f64>) -> f64 {
    let d = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - if i == j { 1.0 } else { 0.0 });
    spectral_norm(d.as_ref())
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Truncated eigendecomposition of a symmetric PSD matrix.
///
/// The input is symmetrized first. Eigenvalues `<= threshold` are dropped;
/// the survivors are returned in descending order.
pub fn truncated_eig_psd(m: MatRef<'_, f64>, threshold: f64) -> Result<TruncatedEig> {
    ensure_square(m, "truncated_eig_psd")?;
    ensure_finite(m, "truncated_eig_psd input")?;
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::AllTruncated { threshold });
    }
    let sym = symmetrize(m);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenFailed(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();
    // faer returns ascending order.
    let keep: Vec<usize> = (0..n).rev().filter(|&i| values[i] > threshold).collect();
    if keep.is_empty() {
        return Err(Error::AllTruncated { threshold });
    }
    let eigenvalues = keep.iter().map(|&i| values[i]).collect();
    let eigenvectors = Mat::from_fn(n, keep.len(), |i, j| vectors[(i, keep[j])]);
    Ok(TruncatedEig {
        eigenvalues,
        eigenvectors,
        threshold_used: threshold,
    })
}

/// Thin SVD keeping singular values strictly above `threshold`.
pub fn truncated_svd(z: MatRef<'_, f64>, threshold: f64) -> Result<TruncatedSvd> {
    ensure_finite(z, "truncated_svd input")?;
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "singular value threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::AllTruncated { threshold });
    }
    let svd = z
        .thin_svd()
        .map_err(|e| Error::FactorizationFailed(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let rank = (0..s.nrows()).take_while(|&i| s[i] > threshold).count();
    if rank == 0 {
        return Err(Error::AllTruncated { threshold });
    }
    Ok(TruncatedSvd {
        left_vectors: svd.U().subcols(0, rank).to_owned(),
        singular_values: (0..rank).map(|i| s[i]).collect(),
        right_vectors: svd.V().subcols(0, rank).to_owned(),
        threshold_used: threshold,
    })
}

/// Householder QR, `B = Q R` with `Q` having `min(r, s)` orthonormal columns.
pub fn economy_qr(b: MatRef<'_, f64>) -> Result<EconomyQr> {
    ensure_finite(b, "economy_qr input")?;
    let qr = b.qr();
    Ok(EconomyQr {
        q: qr.compute_thin_Q(),
        r: qr.thin_R().to_owned(),
    })
}

/// Cholesky factor of `M + λI`, reusable across right-hand sides.
pub struct RegularizedSolver {
    llt: Llt<f64>,
    lambda: f64,
    dim: usize,
}

impl std::fmt::Debug for RegularizedSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegularizedSolver")
            .field("lambda", &self.lambda)
            .field("dim", &self.dim)
            .finish()
    }
}

impl RegularizedSolver {
    pub fn new(m: MatRef<'_, f64>, lambda: f64) -> Result<Self> {
        ensure_square(m, "regularized solve")?;
        ensure_finite(m, "regularized solve matrix")?;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "regularization must be positive, got {lambda}"
            )));
        }
        let n = m.nrows();
        let shifted = Mat::from_fn(n, n, |i, j| {
            0.5 * (m[(i, j)] + m[(j, i)]) + if i == j { lambda } else { 0.0 }
        });
        let llt = shifted.llt(Side::Lower).map_err(|e| {
            Error::FactorizationFailed(format!("M + {lambda:e} I is not numerically positive definite ({e:?})"))
        })?;
        Ok(Self { llt, lambda, dim: n })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(M + λI)⁻¹ rhs`.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if rhs.nrows() != self.dim {
            return Err(Error::mismatch("regularized solve rhs", self.dim, rhs.nrows()));
        }
        ensure_finite(rhs, "regularized solve rhs")?;
        Ok(self.llt.solve(rhs))
    }
}

/// `(M + λI)⁻¹ rhs` via a Cholesky factorization of the symmetrized shift.
pub fn regularized_symmetric_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    RegularizedSolver::new(m, lambda)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = stream_rng(seed, 99);
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn diag(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[test]
    fn eig_identity_keeps_everything() {
        let e = truncated_eig_psd(Mat::<f64>::identity(3, 3).as_ref(), 1e-8).unwrap();
        assert_eq!(e.rank(), 3);
        for l in &e.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_threshold_forces_truncation() {
        let e = truncated_eig_psd(diag(&[4.0, 1e-12, 0.0]).as_ref(), 1e-8).unwrap();
        assert_eq!(e.rank(), 1);
        assert!((e.eigenvalues[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn eig_of_gram_matches_squared_singular_values() {
        let g = random_mat(5, 3, 7);
        let m = g.transpose() * &g;
        let e = truncated_eig_psd(m.as_ref(), 1e-8).unwrap();
        assert_eq!(e.rank(), 3);
        // Independent oracle: faer's SVD of G itself.
        let s = g.singular_values().unwrap();
        for (l, sv) in e.eigenvalues.iter().zip(&s) {
            assert!((l - sv * sv).abs() < 1e-10, "{l} vs {}", sv * sv);
        }
        let ete = e.eigenvectors.transpose() * &e.eigenvectors;
        assert!(distance_from_identity(ete.as_ref()) < 1e-10);
        let resid = &m - e.reconstruct();
        assert!(spectral_norm(resid.as_ref()) < 1e-8 + 1e-10 * spectral_norm(m.as_ref()));
    }

    #[test]
    fn eig_errors() {
        let mut m = Mat::<f64>::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            truncated_eig_psd(m.as_ref(), 1e-8),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            truncated_eig_psd(Mat::<f64>::zeros(3, 3).as_ref(), 1e-8),
            Err(Error::AllTruncated { .. })
        ));
    }

    #[test]
    fn svd_of_zero_is_all_truncated() {
        assert!(matches!(
            truncated_svd(Mat::<f64>::zeros(3, 2).as_ref(), 1e-12),
            Err(Error::AllTruncated { .. })
        ));
    }

    #[test]
    fn svd_rank_one() {
        let z = diag(&[3.0, 0.0]);
        let t = truncated_svd(z.as_ref(), 1e-8).unwrap();
        assert_eq!(t.rank(), 1);
        assert!((t.singular_values[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let z = random_mat(6, 4, 3);
        let t = truncated_svd(z.as_ref(), 1e-12).unwrap();
        assert_eq!(t.rank(), 4);
        // Oracle: explicit product U Σ Vᵀ entry by entry.
        let mut err = 0.0f64;
        for i in 0..6 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..t.rank() {
                    acc += t.left_vectors[(i, k)] * t.singular_values[k] * t.right_vectors[(j, k)];
                }
                err = err.max((acc - z[(i, j)]).abs());
            }
        }
        assert!(err <= 1e-10, "{err}");
        let utu = t.left_vectors.transpose() * &t.left_vectors;
        let vtv = t.right_vectors.transpose() * &t.right_vectors;
        assert!(distance_from_identity(utu.as_ref()) < 1e-10);
        assert!(distance_from_identity(vtv.as_ref()) < 1e-10);
    }

    #[test]
    fn qr_identity_and_permutation() {
        let qr = economy_qr(Mat::<f64>::identity(2, 2).as_ref()).unwrap();
        for i in 0..2 {
            assert!((qr.r[(i, i)].abs() - 1.0).abs() < 1e-14);
            assert!((qr.q[(i, i)].abs() - 1.0).abs() < 1e-14);
        }
        let p = Mat::from_fn(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
        let qr = economy_qr(p.as_ref()).unwrap();
        assert!((&qr.q * &qr.r - &p).norm_max() <= 1e-12);
    }

    #[test]
    fn qr_wide_matrix() {
        let b = random_mat(3, 5, 11);
        let qr = economy_qr(b.as_ref()).unwrap();
        assert_eq!((qr.q.nrows(), qr.q.ncols()), (3, 3));
        assert_eq!((qr.r.nrows(), qr.r.ncols()), (3, 5));
        assert!(spectral_norm((&qr.q * &qr.r - &b).as_ref()) <= 1e-10);
        let qtq = qr.q.transpose() * &qr.q;
        assert!(distance_from_identity(qtq.as_ref()) <= 1e-10);
        for i in 0..3 {
            for j in 0..i {
                assert_eq!(qr.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn solve_identity_halves_rhs() {
        let b = random_mat(4, 2, 5);
        let x = regularized_symmetric_solve(Mat::<f64>::identity(4, 4).as_ref(), b.as_ref(), 1.0).unwrap();
        assert!((&x * 2.0 - &b).norm_max() < 1e-15);
    }

    #[test]
    fn solve_singular_diagonal() {
        let e2 = Mat::from_fn(2, 1, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let x = regularized_symmetric_solve(diag(&[2.0, 0.0]).as_ref(), e2.as_ref(), 1e-6).unwrap();
        assert!(x[(0, 0)].abs() < 1e-12);
        assert!((x[(1, 0)] - 1e6).abs() < 1e-6);
    }

    #[test]
    fn solve_random_psd_residual() {
        let g = random_mat(8, 8, 13);
        let m = &g * g.transpose();
        let lambda = 1e-10 * trace(m.as_ref()) / 8.0;
        let rhs = random_mat(8, 3, 17);
        let x = regularized_symmetric_solve(m.as_ref(), rhs.as_ref(), lambda).unwrap();
        let shifted = &m + diag(&[lambda; 8]);
        let resid = (&shifted * &x - &rhs).norm_l2();
        assert!(resid <= 1e-8 * rhs.norm_l2(), "{resid}");
    }

    #[test]
    fn solve_rejects_bad_lambda_and_indefinite() {
        let m = Mat::<f64>::identity(2, 2);
        let rhs = Mat::<f64>::zeros(2, 1);
        assert!(regularized_symmetric_solve(m.as_ref(), rhs.as_ref(), 0.0).is_err());
        let neg = diag(&[1.0, -1.0]);
        assert!(matches!(
            regularized_symmetric_solve(neg.as_ref(), rhs.as_ref(), 1e-6),
            Err(Error::FactorizationFailed(_))
        ));
    }
}
