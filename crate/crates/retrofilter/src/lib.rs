//! Reconstruction of statistically independent measurements from temporally
//! correlated track-state histories, with conservative process-noise
//! estimation and refiltering.
//!
//! A fusion node that only receives a sensor's state estimates and
//! covariances cannot simply refilter them: consecutive track states are
//! serially correlated. This crate inverts the Kalman recursion step by step
//! to recover, for each update, an equivalent measurement expressed directly
//! in the target's state space (a *state-space equivalent measurement*,
//! SSEM) together with its covariance. The reconstructed sequence is
//! statistically independent and can be passed through a new filter with a
//! different noise model.
//!
//! When the process-noise intensity used by the source filter is unknown,
//! [`procnoise`] estimates it per step as the smallest intensity that keeps
//! the implied information gain positive semidefinite, which guarantees the
//! reconstructed measurement covariance never understates uncertainty.
//!
//! The crate also contains everything needed to exercise the pipeline end to
//! end at desk scale: ballistic target dynamics in an Earth-centered rotating
//! frame ([`dynamics`]), a phased-array radar model producing
//! range/direction-cosine detections ([`sensing`]), the extended Kalman
//! filter shared by the simulated sensor and the fusion node ([`ekf`]), and a
//! scenario driver with error/consistency metrics ([`scenario`]).

pub mod dynamics;
pub mod ekf;
pub mod procnoise;
pub mod scenario;
pub mod sensing;
pub mod spd;
pub mod ssem;

pub use dynamics::{DynamicsModel, ProcessNoiseModel, StateVector};
pub use ekf::{GaussianEstimate, Measurement, MeasurementFunction, TrackHistory};
pub use procnoise::{EtaEstimate, EtaOptions};
pub use scenario::{RunReport, ScenarioConfig};
pub use sensing::{GeodeticCoord, RadarConfig, RuvMeasurement};
pub use spd::SpdMatrix;
pub use ssem::{Decorrelation, EtaProvider, Ssem};
