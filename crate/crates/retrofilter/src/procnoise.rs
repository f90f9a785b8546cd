//! Conservative estimation of the unknown process-noise intensity.
//!
//! Given a pair of consecutive posterior covariances, the dynamics Jacobian
//! bridging them, and the noise basis `B`, the information gained at the
//! later epoch as a function of the noise intensity `η` is
//!
//! ```text
//! J(η) = P_post⁻¹ − (F P_prev Fᵀ + η·B)⁻¹
//! ```
//!
//! `J` is monotone nondecreasing in `η` in the positive semidefinite order,
//! so the smallest `η` for which `J(η)` is PSD is well defined and is located
//! by bracket growth plus bisection. The reconstructed measurement covariance
//! (the inverse of `J`'s leading block) is antitone in `η`, and the true
//! intensity is always feasible, so any intensity at or below the feasibility
//! boundary yields a covariance that dominates the true one. The search
//! therefore lands on the low side of the boundary: it returns the largest
//! intensity known to be infeasible, one bisection width below the boundary,
//! keeping the output conservative by construction rather than by tolerance.

use nalgebra::{DMatrix, Matrix6};
use thiserror::Error;

use crate::spd::{min_eigenvalue, safe_invert, symmetrize, SpdError, SpdMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EtaError {
    #[error("invalid eta search options: {reason}")]
    InvalidOptions { reason: String },
    #[error(
        "information gain infeasible even at eta_max {eta_max} (min eigenvalue {min_eigenvalue:.3e}); covariance pair inconsistent"
    )]
    InfeasibleAtMax { eta_max: f64, min_eigenvalue: f64 },
    #[error("feasibility not monotone in eta near {eta}; numerical failure")]
    NonMonotone { eta: f64 },
    #[error("bisection failed to converge within {iterations} iterations")]
    NoConvergence { iterations: u32 },
    #[error(transparent)]
    Spd(#[from] SpdError),
}

/// Search controls for [`estimate_eta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaOptions {
    /// First positive intensity probed during bracket growth.
    pub eta_init: f64,
    /// Upper limit of the bracket search; infeasibility here is an error.
    pub eta_max: f64,
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
    /// Slack allowed below zero in the PSD feasibility test, scaled by the
    /// trace/dim of the propagated prior covariance `F P_prev Fᵀ` (the
    /// matrix whose rounding dominates the test). The default sits well
    /// above the f64 storage-noise floor of the covariance entries, so that
    /// rounding in a stored track cannot push the detected boundary above
    /// the true intensity, yet the induced low bias stays orders of
    /// magnitude inside every accuracy requirement.
    pub tol_psd: f64,
    /// Optional sliding-window length for median smoothing of per-step
    /// estimates during track decorrelation.
    pub smoothing_window: Option<usize>,
}

impl Default for EtaOptions {
    fn default() -> Self {
        Self {
            eta_init: 1e-6,
            eta_max: 1e4,
            rel_tol: 1e-6,
            tol_psd: 1e-14,
            smoothing_window: None,
        }
    }
}

impl EtaOptions {
    fn validate(&self) -> Result<(), EtaError> {
        if self.eta_init <= 0.0 || self.eta_init.is_nan() {
            return Err(EtaError::InvalidOptions {
                reason: format!("eta_init must be positive, got {}", self.eta_init),
            });
        }
        if self.eta_max <= self.eta_init || self.eta_max.is_nan() {
            return Err(EtaError::InvalidOptions {
                reason: format!(
                    "eta_max {} must exceed eta_init {}",
                    self.eta_max, self.eta_init
                ),
            });
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(EtaError::InvalidOptions {
                reason: format!("rel_tol must be in (0, 1), got {}", self.rel_tol),
            });
        }
        if self.tol_psd < 0.0 {
            return Err(EtaError::InvalidOptions {
                reason: format!("tol_psd must be nonnegative, got {}", self.tol_psd),
            });
        }
        if self.smoothing_window == Some(0) {
            return Err(EtaError::InvalidOptions {
                reason: "smoothing_window must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Result of the line search, including the bracket and the minimality
/// witness at the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaEstimate {
    /// Returned intensity: within `rel_tol` of the feasibility boundary, on
    /// its low (conservative) side whenever the bracket allows.
    pub eta_hat: f64,
    /// Final bracket `(infeasible, feasible)`; both equal `eta_hat` when the
    /// search short-circuits at zero.
    pub bracket: (f64, f64),
    /// Number of information-gain evaluations performed.
    pub iterations: u32,
    /// Smallest eigenvalue of `J(eta_hat)`; a small negative value is
    /// expected, since the estimate sits just below the PSD boundary.
    pub min_eig_at_solution: f64,
}

/// Evaluates `J(η) = P_post⁻¹ − (F P_prev Fᵀ + η·B)⁻¹`, symmetrized.
pub fn j_of_eta(
    eta: f64,
    p_post: &SpdMatrix,
    p_prev_post: &SpdMatrix,
    f: &Matrix6<f64>,
    b: &Matrix6<f64>,
) -> Result<DMatrix<f64>, EtaError> {
    if eta < 0.0 {
        return Err(EtaError::InvalidOptions {
            reason: format!("eta must be nonnegative, got {eta}"),
        });
    }
    let fd = DMatrix::from_fn(6, 6, |i, j| f[(i, j)]);
    let bd = DMatrix::from_fn(6, 6, |i, j| b[(i, j)]);
    let p_pred = symmetrize(&(&fd * p_prev_post.matrix() * fd.transpose() + bd * eta))?;
    let j = safe_invert(p_post.matrix())? - safe_invert(&p_pred)?;
    Ok(symmetrize(&j)?)
}

/// Locates the smallest `η ≥ 0` whose information gain is PSD within the
/// configured tolerance: feasibility check at zero, geometric bracket growth
/// from `eta_init` by factors of 10, then bisection to `rel_tol` relative
/// width. Returns the infeasible end of the final bracket (the conservative
/// side of the boundary); only when that end is zero is the feasible end
/// returned instead.
pub fn estimate_eta(
    p_post: &SpdMatrix,
    p_prev_post: &SpdMatrix,
    f: &Matrix6<f64>,
    b: &Matrix6<f64>,
    opts: &EtaOptions,
) -> Result<EtaEstimate, EtaError> {
    opts.validate()?;

    // Feasibility is tested as P_pred(η) ⪰ P_post, which is exactly
    // equivalent to J(η) ⪰ 0 (inversion is antitone on positive definite
    // matrices) but evaluates in the raw covariance domain, where rounding
    // is not amplified by the condition number of the track covariances.
    let fd = DMatrix::from_fn(6, 6, |i, j| f[(i, j)]);
    let bd = DMatrix::from_fn(6, 6, |i, j| b[(i, j)]);
    let propagated =
        symmetrize(&(&fd * p_prev_post.matrix() * fd.transpose())).map_err(EtaError::from)?;
    // Constant across eta so the feasibility boolean stays monotone.
    let cov_scale = propagated.trace().max(0.0) / p_post.dim() as f64;
    let tol = opts.tol_psd * cov_scale;
    let mut evaluations = 0u32;
    let mut feasible = |eta: f64| -> Result<(bool, f64), EtaError> {
        evaluations += 1;
        let diff = &propagated + &bd * eta - p_post.matrix();
        let min_eig = min_eigenvalue(&symmetrize(&diff)?)?;
        Ok((min_eig >= -tol, min_eig))
    };

    let (zero_ok, _) = feasible(0.0)?;
    if zero_ok {
        let j = j_of_eta(0.0, p_post, p_prev_post, f, b)?;
        return Ok(EtaEstimate {
            eta_hat: 0.0,
            bracket: (0.0, 0.0),
            iterations: evaluations,
            min_eig_at_solution: min_eigenvalue(&j)?,
        });
    }

    // Geometric growth until a feasible upper end is found.
    let mut lo = 0.0;
    let mut hi = opts.eta_init;
    loop {
        let (ok, _) = feasible(hi)?;
        if ok {
            break;
        }
        lo = hi;
        hi *= 10.0;
        if hi > opts.eta_max {
            let (ok_max, eig_max) = feasible(opts.eta_max)?;
            if ok_max {
                hi = opts.eta_max;
                break;
            }
            return Err(EtaError::InfeasibleAtMax {
                eta_max: opts.eta_max,
                min_eigenvalue: eig_max,
            });
        }
    }

    // Bisection keeps lo infeasible and hi feasible. The extra 0.3 factor
    // leaves the returned value within rel_tol of the boundary even after
    // the final interval is attributed entirely to one side.
    let max_iterations = 300;
    let mut iterations = 0u32;
    while hi - lo > 0.3 * opts.rel_tol * hi {
        iterations += 1;
        if iterations > max_iterations {
            return Err(EtaError::NoConvergence {
                iterations: max_iterations,
            });
        }
        let mid = 0.5 * (lo + hi);
        let (ok, _) = feasible(mid)?;
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Minimality witness: the infeasible end must actually violate PSD,
    // otherwise feasibility was not monotone over the bracket.
    if lo > 0.0 {
        let (lo_ok, _) = feasible(lo)?;
        if lo_ok {
            return Err(EtaError::NonMonotone { eta: lo });
        }
    }

    // The covariance recovered from J is antitone in eta, so the low end of
    // the bracket is the conservative estimate.
    let eta_hat = if lo > 0.0 { lo } else { hi };
    let j = j_of_eta(eta_hat, p_post, p_prev_post, f, b)?;
    Ok(EtaEstimate {
        eta_hat,
        bracket: (lo, hi),
        iterations: evaluations,
        min_eig_at_solution: min_eigenvalue(&j)?,
    })
}
