//! Dense real-matrix primitives: SVD-based pseudoinverse, numerical rank,
//! column-span membership, and Tikhonov-regularized least squares.
//!
//! All operations validate that inputs are finite and non-degenerate, and all
//! truncation decisions go through an explicit [`Tolerance`] so callers can
//! reproduce a decision exactly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix has a zero dimension ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("non-finite entry {value} at ({row},{col})")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("ridge parameter must be positive and finite, got {theta}")]
    BadTheta { theta: f64 },
    #[error("singular value decomposition did not converge")]
    SvdDidNotConverge,
    #[error("linear solve failed: {context}")]
    SolveFailed { context: String },
}

/// Truncation thresholds shared by every rank decision in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Relative cutoff: singular values below `rank_tol * sigma_max` are zeroed.
    pub rank_tol: f64,
    /// Absolute-plus-relative residual cutoff for consistency checks.
    pub residual_tol: f64,
}

impl Tolerance {
    pub const DEFAULT_RESIDUAL: f64 = 1e-9;

    /// Default tolerance for a matrix of the given shape:
    /// `rank_tol = 1e-12 * max(rows, cols)`, `residual_tol = 1e-9`.
    pub fn for_shape(rows: usize, cols: usize) -> Self {
        Tolerance {
            rank_tol: 1e-12 * rows.max(cols) as f64,
            residual_tol: Self::DEFAULT_RESIDUAL,
        }
    }
}

/// Default ridge for a regularized solve against `k`: `1e-6 * (1 + sigma_max(k))`.
pub fn default_theta(k: &DMatrix<f64>) -> Result<f64, LinalgError> {
    check_matrix(k)?;
    let smax = thin_svd(k)?.singular.max();
    Ok(1e-6 * (1.0 + smax))
}

pub(crate) fn check_matrix(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(LinalgError::EmptyMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let value = m[(row, col)];
            if !value.is_finite() {
                return Err(LinalgError::NonFinite { row, col, value });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_vector(v: &DVector<f64>) -> Result<(), LinalgError> {
    for row in 0..v.len() {
        let value = v[row];
        if !value.is_finite() {
            return Err(LinalgError::NonFinite { row, col: 0, value });
        }
    }
    Ok(())
}

struct ThinSvd {
    u: DMatrix<f64>,
    singular: DVector<f64>,
    v_t: DMatrix<f64>,
}

/// One-sided Jacobi orthogonalization. nalgebra's bidiagonal SVD can return
/// factors that do not reconstruct an exactly rank-deficient input (mispaired
/// vectors, wrong leading singular value), so every rank decision here runs
/// on this instead: quadratic in the column count per sweep, which is
/// irrelevant at the matrix sizes this crate handles, and safe at rank
/// boundaries because a dependent column simply rotates to zero.
fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd, LinalgError> {
    if m.nrows() < m.ncols() {
        let t = thin_svd(&m.transpose())?;
        return Ok(ThinSvd {
            u: t.v_t.transpose(),
            singular: t.singular,
            v_t: t.u.transpose(),
        });
    }
    let n = m.ncols();
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    // Rotate column pairs until all are mutually orthogonal at working
    // precision; each rotation kills one inner product exactly.
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        sweeps += 1;
        if sweeps > 128 {
            return Err(LinalgError::SvdDidNotConverge);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let app = w.column(p).norm_squared();
                let aqq = w.column(q).norm_squared();
                let apq = w.column(p).dot(&w.column(q));
                if apq == 0.0 || apq.abs() <= 1e-15 * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..w.nrows() {
                    let (wip, wiq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wip - s * wiq;
                    w[(i, q)] = s * wip + c * wiq;
                }
                for i in 0..n {
                    let (vip, viq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    // Column norms are the singular values; order them descending, carrying
    // the pairing along. Zero columns get zero left vectors, which the
    // truncating consumers never touch.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut u = DMatrix::<f64>::zeros(m.nrows(), n);
    let mut v_t = DMatrix::<f64>::zeros(n, n);
    let mut singular = DVector::<f64>::zeros(n);
    for (slot, &j) in order.iter().enumerate() {
        singular[slot] = norms[j];
        if norms[j] > 0.0 {
            let scaled = w.column(j) / norms[j];
            u.column_mut(slot).copy_from(&scaled);
        }
        v_t.row_mut(slot).copy_from(&v.column(j).transpose());
    }
    Ok(ThinSvd { u, singular, v_t })
}

/// Moore-Penrose pseudoinverse. Singular values strictly below
/// `tol.rank_tol * sigma_max` are truncated to zero before inversion, so a
/// zero matrix maps to its zero transpose.
pub fn pinv(m: &DMatrix<f64>, tol: &Tolerance) -> Result<DMatrix<f64>, LinalgError> {
    check_matrix(m)?;
    let svd = thin_svd(m)?;
    let cutoff = tol.rank_tol * svd.singular.max();
    let inverted = DVector::from_iterator(
        svd.singular.len(),
        svd.singular
            .iter()
            .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 }),
    );
    Ok(svd.v_t.transpose() * DMatrix::from_diagonal(&inverted) * svd.u.transpose())
}

/// Numerical rank under the same truncation rule as [`pinv`].
pub fn rank_of(m: &DMatrix<f64>, tol: &Tolerance) -> Result<usize, LinalgError> {
    check_matrix(m)?;
    let singular = thin_svd(m)?.singular;
    let cutoff = tol.rank_tol * singular.max();
    Ok(singular.iter().filter(|&&s| s > cutoff && s > 0.0).count())
}

/// Whether `v` lies in the column span of `m`: the least-squares residual of
/// `m x = v` must satisfy `|m x - v| <= tol.residual_tol * (1 + |v|)`.
pub fn in_colspan(m: &DMatrix<f64>, v: &DVector<f64>, tol: &Tolerance) -> Result<bool, LinalgError> {
    check_matrix(m)?;
    check_vector(v)?;
    if m.nrows() != v.len() {
        return Err(LinalgError::DimensionMismatch {
            context: format!("span test: matrix is {}x{}, vector has {} rows", m.nrows(), m.ncols(), v.len()),
        });
    }
    let x = pinv(m, tol)? * v;
    let residual = (m * x - v).norm();
    Ok(residual <= tol.residual_tol * (1.0 + v.norm()))
}

/// Tikhonov-regularized least squares: `(k^T k + theta^2 I)^{-1} k^T l`.
/// `theta > 0` keeps the normal matrix positive definite for any `k`.
pub fn tikhonov_solve(
    k: &DMatrix<f64>,
    l: &DVector<f64>,
    theta: f64,
) -> Result<DVector<f64>, LinalgError> {
    check_matrix(k)?;
    check_vector(l)?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(LinalgError::BadTheta { theta });
    }
    if k.nrows() != l.len() {
        return Err(LinalgError::DimensionMismatch {
            context: format!("ridge solve: matrix is {}x{}, vector has {} rows", k.nrows(), k.ncols(), l.len()),
        });
    }
    let mut normal = k.transpose() * k;
    for i in 0..normal.nrows() {
        normal[(i, i)] += theta * theta;
    }
    let rhs = k.transpose() * l;
    if let Some(chol) = normal.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    // theta^2 can underflow against a huge k^T k; LU is the fallback.
    normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LinalgError::SolveFailed {
            context: format!("regularized normal equations singular at theta = {theta}"),
        })
}

/// The ridge solve operator itself: `(k^T k + theta^2 I)^{-1} k^T`, so that
/// `tikhonov_solve(k, l, theta) == tikhonov_solve_matrix(k, theta) * l`.
pub fn tikhonov_solve_matrix(k: &DMatrix<f64>, theta: f64) -> Result<DMatrix<f64>, LinalgError> {
    check_matrix(k)?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(LinalgError::BadTheta { theta });
    }
    let mut normal = k.transpose() * k;
    for i in 0..normal.nrows() {
        normal[(i, i)] += theta * theta;
    }
    let inv = normal
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| normal.lu().try_inverse())
        .ok_or_else(|| LinalgError::SolveFailed {
            context: format!("regularized normal equations singular at theta = {theta}"),
        })?;
    Ok(inv * k.transpose())
}
