//! Target motion models shared by the simulated sensor and the fusion node:
//! state propagation, dynamics Jacobians, and the white-acceleration process
//! noise basis.
//!
//! States are `[x y z ẋ ẏ ż]` in meters and m/s, expressed in an
//! Earth-centered rotating (ECR) Cartesian frame.

use nalgebra::{Matrix6, Vector3, Vector6};
use thiserror::Error;

/// Earth gravitational parameter, m³/s².
pub const MU_EARTH: f64 = 3.986004418e14;
/// Earth rotation rate about +z, rad/s.
pub const OMEGA_EARTH: f64 = 7.2921159e-5;
/// Default integrator step ceiling for ballistic propagation, seconds.
pub const DEFAULT_MAX_STEP_S: f64 = 1.0;

/// Minimum geocentric radius accepted by the ballistic derivative, meters.
const MIN_RADIUS_M: f64 = 1e5;

/// Finite-difference steps for the ballistic Jacobian: 1 m in position,
/// 1e-3 m/s in velocity.
const FD_STEPS: [f64; 6] = [1.0, 1.0, 1.0, 1e-3, 1e-3, 1e-3];

/// `[x y z ẋ ẏ ż]` in the ECR frame.
pub type StateVector = Vector6<f64>;

pub fn make_state(position: Vector3<f64>, velocity: Vector3<f64>) -> StateVector {
    Vector6::new(
        position.x, position.y, position.z, velocity.x, velocity.y, velocity.z,
    )
}

pub fn position(x: &StateVector) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

pub fn velocity(x: &StateVector) -> Vector3<f64> {
    Vector3::new(x[3], x[4], x[5])
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("time step must be nonnegative, got {dt}")]
    NegativeDt { dt: f64 },
    #[error("integrator step ceiling must be positive, got {step}")]
    NonPositiveStepCeiling { step: f64 },
    #[error("state too close to Earth's center (radius {radius:.3e} m)")]
    NearEarthCenter { radius: f64 },
    #[error("process noise intensity must be nonnegative, got {eta}")]
    NegativeEta { eta: f64 },
}

/// Constant-velocity transition matrix `[[I, dt·I], [0, I]]`.
pub fn cv_transition(dt: f64) -> Result<Matrix6<f64>, DynamicsError> {
    if dt < 0.0 {
        return Err(DynamicsError::NegativeDt { dt });
    }
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    Ok(f)
}

/// White-acceleration noise basis: per-axis blocks
/// `[[dt³/3, dt²/2], [dt²/2, dt]]` arranged into the `[pos | vel]` ordering.
pub fn noise_basis(dt: f64) -> Result<Matrix6<f64>, DynamicsError> {
    if dt < 0.0 {
        return Err(DynamicsError::NegativeDt { dt });
    }
    let mut b = Matrix6::zeros();
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    for i in 0..3 {
        b[(i, i)] = dt3 / 3.0;
        b[(i, i + 3)] = dt2 / 2.0;
        b[(i + 3, i)] = dt2 / 2.0;
        b[(i + 3, i + 3)] = dt;
    }
    Ok(b)
}

/// White-acceleration process noise with power spectral density `eta`
/// (m²/s³): `Q(η, Δt) = η · B(Δt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoiseModel {
    pub eta: f64,
}

impl ProcessNoiseModel {
    pub fn new(eta: f64) -> Result<Self, DynamicsError> {
        if eta < 0.0 {
            return Err(DynamicsError::NegativeEta { eta });
        }
        Ok(Self { eta })
    }

    pub fn q_matrix(&self, dt: f64) -> Result<Matrix6<f64>, DynamicsError> {
        Ok(noise_basis(dt)? * self.eta)
    }
}

/// Time derivative of the state in the rotating ECR frame: inverse-square
/// gravity plus Coriolis and centrifugal terms.
pub fn ballistic_derivative(x: &StateVector) -> Result<Vector6<f64>, DynamicsError> {
    let p = position(x);
    let v = velocity(x);
    let r = p.norm();
    if r <= MIN_RADIUS_M {
        return Err(DynamicsError::NearEarthCenter { radius: r });
    }
    let omega = Vector3::new(0.0, 0.0, OMEGA_EARTH);
    let gravity = -p * (MU_EARTH / (r * r * r));
    let coriolis = -2.0 * omega.cross(&v);
    let centrifugal = -omega.cross(&omega.cross(&p));
    let a = gravity + coriolis + centrifugal;
    Ok(make_state(v, a))
}

fn rk4_step(x: &StateVector, h: f64) -> Result<StateVector, DynamicsError> {
    let k1 = ballistic_derivative(x)?;
    let k2 = ballistic_derivative(&(x + k1 * (h / 2.0)))?;
    let k3 = ballistic_derivative(&(x + k2 * (h / 2.0)))?;
    let k4 = ballistic_derivative(&(x + k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Deterministic motion model bridging consecutive track epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsModel {
    ConstantVelocity,
    /// Ballistic motion in the rotating ECR frame, integrated with fixed-step
    /// RK4 at steps no longer than `max_step_s`.
    BallisticEcr {
        max_step_s: f64,
    },
}

impl DynamicsModel {
    /// Ballistic model with the default 1 s step ceiling.
    pub fn ballistic() -> Self {
        DynamicsModel::BallisticEcr {
            max_step_s: DEFAULT_MAX_STEP_S,
        }
    }

    pub fn propagate(&self, x: &StateVector, dt: f64) -> Result<StateVector, DynamicsError> {
        if dt < 0.0 {
            return Err(DynamicsError::NegativeDt { dt });
        }
        match self {
            DynamicsModel::ConstantVelocity => Ok(cv_transition(dt)? * x),
            DynamicsModel::BallisticEcr { max_step_s } => {
                if *max_step_s <= 0.0 {
                    return Err(DynamicsError::NonPositiveStepCeiling { step: *max_step_s });
                }
                if dt == 0.0 {
                    return Ok(*x);
                }
                let n = (dt / max_step_s).ceil().max(1.0) as usize;
                let h = dt / n as f64;
                let mut state = *x;
                for _ in 0..n {
                    state = rk4_step(&state, h)?;
                }
                Ok(state)
            }
        }
    }

    /// Jacobian of the flow map over `dt` at `x`. Exact for constant
    /// velocity; central finite differences of the integrator for the
    /// ballistic model.
    pub fn jacobian(&self, x: &StateVector, dt: f64) -> Result<Matrix6<f64>, DynamicsError> {
        match self {
            DynamicsModel::ConstantVelocity => cv_transition(dt),
            DynamicsModel::BallisticEcr { .. } => {
                if dt < 0.0 {
                    return Err(DynamicsError::NegativeDt { dt });
                }
                let mut f = Matrix6::zeros();
                for i in 0..6 {
                    let mut plus = *x;
                    let mut minus = *x;
                    plus[i] += FD_STEPS[i];
                    minus[i] -= FD_STEPS[i];
                    let col = (self.propagate(&plus, dt)? - self.propagate(&minus, dt)?)
                        / (2.0 * FD_STEPS[i]);
                    f.set_column(i, &col);
                }
                Ok(f)
            }
        }
    }
}

/// Specific orbital energy in the inertial frame, evaluated from an ECR
/// state: `½‖v + ω×p‖² − μ/‖p‖`. Rotation-invariant, so no epoch rotation is
/// needed.
pub fn inertial_specific_energy(x: &StateVector) -> f64 {
    let p = position(x);
    let v = velocity(x);
    let omega = Vector3::new(0.0, 0.0, OMEGA_EARTH);
    let v_inertial = v + omega.cross(&p);
    0.5 * v_inertial.norm_squared() - MU_EARTH / p.norm()
}
