//! Numerically careful primitives for symmetric positive-(semi)definite
//! matrices.
//!
//! All covariance arithmetic in the crate routes through these helpers:
//! matrices are re-symmetrized after every composite operation and inversions
//! fail loudly (carrying the offending eigenvalue) instead of propagating
//! garbage. Thresholds are relative to `trace/dim` because position (m²) and
//! velocity (m²/s²) blocks of the same covariance differ by orders of
//! magnitude.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative factor on `trace/dim` below which an eigenvalue still counts as
/// nonnegative when validating a covariance.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Relative factor on `trace/dim` below which a matrix is refused for
/// inversion.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-12;

/// Relative asymmetry (max-norm) tolerated before a matrix is rejected as
/// non-symmetric.
pub const SYMMETRY_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpdError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is numerically singular (min eigenvalue {min_eigenvalue:.3e})")]
    Singular { min_eigenvalue: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix dimension must be at least 1")]
    Empty,
}

/// Returns `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>, SpdError> {
    if a.nrows() != a.ncols() {
        return Err(SpdError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok((a + a.transpose()) * 0.5)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), SpdError> {
    if a.nrows() != a.ncols() {
        return Err(SpdError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = a.amax();
    let asymmetry = (a - a.transpose()).amax();
    if asymmetry > SYMMETRY_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(SpdError::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Rejects inputs whose asymmetry exceeds [`SYMMETRY_REL_TOL`]; the
/// eigensolve itself runs on the symmetrized copy so the spectrum is real by
/// construction.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64, SpdError> {
    check_symmetric(a)?;
    if a.nrows() == 0 {
        return Err(SpdError::Empty);
    }
    let sym = symmetrize(a)?;
    let eig = sym.symmetric_eigenvalues();
    Ok(eig.min())
}

/// True iff `A − B ⪰ −tol·I`, i.e. A dominates B in the positive
/// semidefinite order up to `tol`.
pub fn psd_dominates(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool, SpdError> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(SpdError::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let diff = a - b;
    Ok(min_eigenvalue(&diff)? >= -tol)
}

/// Inverse of a symmetric positive definite matrix via Cholesky
/// factorization, symmetrized.
///
/// Refuses matrices whose smallest eigenvalue is at or below
/// `DEFAULT_SINGULAR_TOL · trace/dim`; the error carries the offending
/// eigenvalue.
pub fn safe_invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>, SpdError> {
    check_symmetric(a)?;
    let dim = a.nrows();
    if dim == 0 {
        return Err(SpdError::Empty);
    }
    let sym = symmetrize(a)?;
    let min_eig = min_eigenvalue(&sym)?;
    let tol = DEFAULT_SINGULAR_TOL * sym.trace().max(0.0) / dim as f64;
    if min_eig <= tol {
        return Err(SpdError::Singular {
            min_eigenvalue: min_eig,
        });
    }
    let chol = sym.cholesky().ok_or(SpdError::Singular {
        min_eigenvalue: min_eig,
    })?;
    symmetrize(&chol.inverse())
}

/// Symmetric matrix validated to be positive semidefinite within tolerance.
///
/// Construction symmetrizes the input exactly and checks the smallest
/// eigenvalue against `DEFAULT_PSD_TOL` scaled by `trace/dim` (or by an
/// explicit scale hint when cancellation in the producing operation is
/// relative to a larger input).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates against the matrix's own `trace/dim` scale.
    pub fn new(m: DMatrix<f64>) -> Result<Self, SpdError> {
        let dim = m.nrows().max(1);
        let scale = m.trace().max(0.0) / dim as f64;
        Self::with_scale(m, scale)
    }

    /// Validates against an explicit scale (same units as the entries).
    pub fn with_scale(m: DMatrix<f64>, scale: f64) -> Result<Self, SpdError> {
        if m.nrows() == 0 {
            return Err(SpdError::Empty);
        }
        let sym = symmetrize(&m)?;
        let min_eig = min_eigenvalue(&sym)?;
        if min_eig < -DEFAULT_PSD_TOL * scale.max(0.0) {
            return Err(SpdError::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { m: sym })
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self, SpdError> {
        Self::new(DMatrix::from_diagonal(diag))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.m.symmetric_eigenvalues().min()
    }

    /// [`safe_invert`] of the wrapped matrix.
    pub fn inverse(&self) -> Result<SpdMatrix, SpdError> {
        let inv = safe_invert(&self.m)?;
        Ok(Self { m: inv })
    }
}
