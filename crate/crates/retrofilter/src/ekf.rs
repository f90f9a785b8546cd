//! Extended Kalman filter shared by the simulated source sensor (RUV radar
//! measurements) and the fusion node (refiltering of reconstructed
//! state-space measurements).

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use thiserror::Error;

use crate::dynamics::{
    make_state, position, DynamicsError, DynamicsModel, ProcessNoiseModel, StateVector,
};
use crate::sensing::{h_ruv, RuvMeasurement, SensingError};
use crate::spd::{safe_invert, symmetrize, SpdError, SpdMatrix};

/// Standard deviation assigned to each velocity axis when a track is
/// initialized from a single detection, m/s.
pub const INIT_VELOCITY_STD: f64 = 3000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EkfError {
    #[error("measurement has dimension {got}, expected {expected}")]
    MeasurementDimension { got: usize, expected: usize },
    #[error("state-subspace dimension {dim} outside 1..=6")]
    SubspaceDimension { dim: usize },
    #[error("innovation covariance not invertible: {0}")]
    SingularInnovation(SpdError),
    #[error("epochs must be nondecreasing: {epoch_s} after {previous_s}")]
    NonMonotoneEpoch { epoch_s: f64, previous_s: f64 },
    #[error("track history epochs must be strictly increasing at {epoch_s}")]
    DuplicateEpoch { epoch_s: f64 },
    #[error("measurement dimension {dim} exceeds state dimension 6")]
    MeasurementTooWide { dim: usize },
    #[error("direction cosines leave no elevation component (u² + v² ≥ 1)")]
    DegenerateDirectionCosines,
    #[error("filter step at epoch {epoch_s} failed: {source}")]
    Step {
        epoch_s: f64,
        #[source]
        source: Box<EkfError>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Spd(#[from] SpdError),
}

/// State mean and covariance at an epoch; the unit of track history.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEstimate {
    pub epoch_s: f64,
    pub mean: StateVector,
    pub cov: SpdMatrix,
}

/// Measurement model evaluated inside the filter update.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementFunction {
    /// Range/direction-cosine conversion in a fixed sensor frame. The frame
    /// travels with the measurement (it was frozen when the detection was
    /// taken); the Jacobian is evaluated at the predicted state.
    Ruv {
        site_ecr: Vector3<f64>,
        frame: Matrix3<f64>,
    },
    /// Direct observation of the first `dim` state components,
    /// `H = [I_dim 0]`.
    StateSubspace { dim: usize },
}

impl MeasurementFunction {
    pub fn dim(&self) -> usize {
        match self {
            MeasurementFunction::Ruv { .. } => 3,
            MeasurementFunction::StateSubspace { dim } => *dim,
        }
    }

    pub fn evaluate(&self, x: &StateVector) -> Result<DVector<f64>, EkfError> {
        match self {
            MeasurementFunction::Ruv { site_ecr, frame } => {
                let z = h_ruv(x, site_ecr, frame)?;
                Ok(DVector::from_vec(vec![z.x, z.y, z.z]))
            }
            MeasurementFunction::StateSubspace { dim } => {
                if *dim == 0 || *dim > 6 {
                    return Err(EkfError::SubspaceDimension { dim: *dim });
                }
                Ok(DVector::from_iterator(*dim, x.iter().take(*dim).copied()))
            }
        }
    }

    /// Measurement Jacobian at `x` (dim × 6). Closed form for RUV (zero
    /// velocity columns); exactly `[I 0]` for the state subspace.
    pub fn jacobian_at(&self, x: &StateVector) -> Result<DMatrix<f64>, EkfError> {
        match self {
            MeasurementFunction::Ruv { site_ecr, frame } => {
                let d = frame * (position(x) - site_ecr);
                let r = d.norm();
                if r < 1e-9 {
                    return Err(EkfError::Sensing(SensingError::ZeroRange));
                }
                let r3 = r * r * r;
                // Rows of ∂(r,u,v)/∂d.
                let dr = d / r;
                let du = Vector3::new(1.0 / r, 0.0, 0.0) - d * (d.x / r3);
                let dv = Vector3::new(0.0, 1.0 / r, 0.0) - d * (d.y / r3);
                let d_ruv = Matrix3::from_rows(&[dr.transpose(), du.transpose(), dv.transpose()]);
                let h_pos = d_ruv * frame;
                let mut h = DMatrix::zeros(3, 6);
                for i in 0..3 {
                    for j in 0..3 {
                        h[(i, j)] = h_pos[(i, j)];
                    }
                }
                Ok(h)
            }
            MeasurementFunction::StateSubspace { dim } => {
                if *dim == 0 || *dim > 6 {
                    return Err(EkfError::SubspaceDimension { dim: *dim });
                }
                let mut h = DMatrix::zeros(*dim, 6);
                for i in 0..*dim {
                    h[(i, i)] = 1.0;
                }
                Ok(h)
            }
        }
    }
}

/// A measurement ready for the filter: value, covariance, and the function
/// that maps states into its space.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub epoch_s: f64,
    pub z: DVector<f64>,
    pub noise_cov: SpdMatrix,
    pub function: MeasurementFunction,
}

impl From<&RuvMeasurement> for Measurement {
    fn from(m: &RuvMeasurement) -> Self {
        Measurement {
            epoch_s: m.epoch_s,
            z: DVector::from_vec(vec![m.z.x, m.z.y, m.z.z]),
            noise_cov: m.noise_cov.clone(),
            function: MeasurementFunction::Ruv {
                site_ecr: m.site_ecr,
                frame: m.frame,
            },
        }
    }
}

/// Time-ordered estimates plus the metadata a fusion node holds about them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHistory {
    pub estimates: Vec<GaussianEstimate>,
    pub dynamics: DynamicsModel,
    /// Dimension of the original measurements; configuration, never inferred.
    pub meas_dim: usize,
    pub declared_noise: Option<ProcessNoiseModel>,
    /// Set when the history was reported at a lower rate than the native
    /// measurement rate; such histories are rejected by decorrelation.
    pub downsampled: bool,
}

impl TrackHistory {
    pub fn new(
        estimates: Vec<GaussianEstimate>,
        dynamics: DynamicsModel,
        meas_dim: usize,
        declared_noise: Option<ProcessNoiseModel>,
    ) -> Result<Self, EkfError> {
        if meas_dim > 6 {
            return Err(EkfError::MeasurementTooWide { dim: meas_dim });
        }
        for pair in estimates.windows(2) {
            if pair[1].epoch_s <= pair[0].epoch_s {
                return Err(EkfError::DuplicateEpoch {
                    epoch_s: pair[1].epoch_s,
                });
            }
        }
        Ok(Self {
            estimates,
            dynamics,
            meas_dim,
            declared_noise,
            downsampled: false,
        })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

fn to_dyn(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| m[(i, j)])
}

/// Time update: propagate the mean through the dynamics and the covariance
/// through `F P Fᵀ + Q`, re-symmetrized.
pub fn predict(
    est: &GaussianEstimate,
    dynamics: &DynamicsModel,
    q: &SpdMatrix,
    dt: f64,
) -> Result<GaussianEstimate, EkfError> {
    let f = dynamics.jacobian(&est.mean, dt)?;
    let mean = dynamics.propagate(&est.mean, dt)?;
    let fd = to_dyn(&f);
    let p = &fd * est.cov.matrix() * fd.transpose() + q.matrix();
    let scale = (est.cov.trace() + q.trace()).max(0.0) / 6.0;
    let cov = SpdMatrix::with_scale(p, scale)?;
    Ok(GaussianEstimate {
        epoch_s: est.epoch_s + dt,
        mean,
        cov,
    })
}

/// Covariance form used by the measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceUpdate {
    /// `P − K S Kᵀ`, matching the algebra the decorrelation inverts.
    Subtractive,
    /// Joseph-stabilized form, for numerical comparison experiments.
    Joseph,
}

/// Measurement update at the predicted state.
pub fn update(
    pred: &GaussianEstimate,
    z: &DVector<f64>,
    noise_cov: &SpdMatrix,
    function: &MeasurementFunction,
) -> Result<GaussianEstimate, EkfError> {
    update_with(pred, z, noise_cov, function, CovarianceUpdate::Subtractive)
}

/// Cap on Gauss-Newton relinearizations inside one measurement update.
const MAX_UPDATE_ITERATIONS: usize = 5;

pub fn update_with(
    pred: &GaussianEstimate,
    z: &DVector<f64>,
    noise_cov: &SpdMatrix,
    function: &MeasurementFunction,
    form: CovarianceUpdate,
) -> Result<GaussianEstimate, EkfError> {
    let m = function.dim();
    if z.len() != m {
        return Err(EkfError::MeasurementDimension {
            got: z.len(),
            expected: m,
        });
    }
    if noise_cov.dim() != m {
        return Err(EkfError::MeasurementDimension {
            got: noise_cov.dim(),
            expected: m,
        });
    }

    let p = pred.cov.matrix();

    // Iterated update: relinearize the measurement function at the running
    // posterior until the mean settles. A single pass leaves second-order
    // residuals when the innovation spans kilometers (the first updates
    // after a zero-velocity initialization), and those residuals are far
    // outside the covariance the filter reports. For a linear function the
    // first relinearization reproduces the plain update and the loop exits.
    let mut x = pred.mean;
    let mut h = function.jacobian_at(&x)?;
    let mut s = symmetrize(&(&h * p * h.transpose() + noise_cov.matrix()))?;
    let mut gain = {
        let s_inv = safe_invert(&s).map_err(EkfError::SingularInnovation)?;
        p * h.transpose() * s_inv
    };
    for _ in 0..MAX_UPDATE_ITERATIONS {
        let hx = function.evaluate(&x)?;
        let shift = pred.mean - x;
        let shift_d = DVector::from_iterator(6, shift.iter().copied());
        let residual = z - hx - &h * shift_d;
        let correction = &gain * residual;
        let mut x_next = pred.mean;
        for i in 0..6 {
            x_next[i] += correction[i];
        }
        let step = (x_next - x).norm();
        x = x_next;
        if step <= 1e-9 * (1.0 + x.norm()) {
            break;
        }
        h = function.jacobian_at(&x)?;
        s = symmetrize(&(&h * p * h.transpose() + noise_cov.matrix()))?;
        let s_inv = safe_invert(&s).map_err(EkfError::SingularInnovation)?;
        gain = p * h.transpose() * s_inv;
    }

    let p_post = match form {
        CovarianceUpdate::Subtractive => p - &gain * &s * gain.transpose(),
        CovarianceUpdate::Joseph => {
            let ikh = DMatrix::identity(6, 6) - &gain * &h;
            &ikh * p * ikh.transpose() + &gain * noise_cov.matrix() * gain.transpose()
        }
    };
    // Cancellation in the update is relative to the predicted covariance, so
    // validate on that scale rather than the (possibly much smaller) result.
    let cov = SpdMatrix::with_scale(p_post, pred.cov.trace().max(0.0) / 6.0)?;

    Ok(GaussianEstimate {
        epoch_s: pred.epoch_s,
        mean: x,
        cov,
    })
}

/// Initializes a track from a single RUV detection: the measurement is mapped
/// back to Cartesian position with a linearized covariance transform, and the
/// velocity prior is zero mean with [`INIT_VELOCITY_STD`] per axis.
pub fn init_track(first: &RuvMeasurement) -> Result<GaussianEstimate, EkfError> {
    let (r, u, v) = (first.z.x, first.z.y, first.z.z);
    let w_sq = 1.0 - u * u - v * v;
    if w_sq <= 0.0 {
        return Err(EkfError::DegenerateDirectionCosines);
    }
    let w = w_sq.sqrt();

    let d = Vector3::new(r * u, r * v, r * w);
    let pos = first.site_ecr + first.frame.transpose() * d;

    // ∂d/∂(r,u,v) columns.
    let jd = Matrix3::from_columns(&[
        Vector3::new(u, v, w),
        Vector3::new(r, 0.0, -r * u / w),
        Vector3::new(0.0, r, -r * v / w),
    ]);
    let j_ecr = first.frame.transpose() * jd;
    let r_mat = Matrix3::from_fn(|i, j| first.noise_cov.matrix()[(i, j)]);
    let p_pos = j_ecr * r_mat * j_ecr.transpose();

    let mut p = DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            p[(i, j)] = p_pos[(i, j)];
        }
        p[(i + 3, i + 3)] = INIT_VELOCITY_STD * INIT_VELOCITY_STD;
    }

    Ok(GaussianEstimate {
        epoch_s: first.epoch_s,
        mean: make_state(pos, Vector3::zeros()),
        cov: SpdMatrix::new(p)?,
    })
}

/// Runs the predict/update recursion over time-ordered measurements,
/// recording the post-update estimate at every epoch. The initial estimate
/// seeds the history; an empty measurement sequence returns it alone.
pub fn run_filter(
    measurements: &[Measurement],
    dynamics: &DynamicsModel,
    noise: &ProcessNoiseModel,
    init: &GaussianEstimate,
) -> Result<TrackHistory, EkfError> {
    let mut estimates = Vec::with_capacity(measurements.len() + 1);
    estimates.push(init.clone());
    let mut current = init.clone();
    let mut meas_dim = None;

    for m in measurements {
        let step = (|| -> Result<GaussianEstimate, EkfError> {
            let dt = m.epoch_s - current.epoch_s;
            if dt < 0.0 {
                return Err(EkfError::NonMonotoneEpoch {
                    epoch_s: m.epoch_s,
                    previous_s: current.epoch_s,
                });
            }
            let q = SpdMatrix::new(to_dyn(&noise.q_matrix(dt)?))?;
            let pred = predict(&current, dynamics, &q, dt)?;
            update(&pred, &m.z, &m.noise_cov, &m.function)
        })()
        .map_err(|e| EkfError::Step {
            epoch_s: m.epoch_s,
            source: Box::new(e),
        })?;

        match meas_dim {
            None => meas_dim = Some(m.function.dim()),
            Some(d) if d != m.function.dim() => {
                return Err(EkfError::MeasurementDimension {
                    got: m.function.dim(),
                    expected: d,
                })
            }
            _ => {}
        }

        estimates.push(step.clone());
        current = step;
    }

    TrackHistory::new(estimates, *dynamics, meas_dim.unwrap_or(0), Some(*noise))
}
