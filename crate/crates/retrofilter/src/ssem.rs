//! Reconstruction of state-space equivalent measurements (SSEM) from
//! consecutive track estimates.
//!
//! For a filter whose measurement function is `H = [I_M 0]`, the update
//! equations can be inverted exactly from the stored means and covariances:
//!
//! * the information gain `J = P_post⁻¹ − P_pred⁻¹` has the inverse of the
//!   measurement covariance as its leading M×M block,
//! * the gain satisfies `[K 0] = I − P_post P_pred⁻¹`,
//! * and the measurement itself is `z = K†(x_post − P_post P_pred⁻¹ x_pred)`.
//!
//! Applying the three identities to each consecutive pair of estimates turns
//! a serially correlated track history into an independent measurement
//! sequence that can be refiltered with a different noise model.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{noise_basis, DynamicsError, StateVector};
use crate::ekf::{predict, EkfError, GaussianEstimate, TrackHistory};
use crate::procnoise::{estimate_eta, EtaError, EtaEstimate, EtaOptions};
use crate::spd::{min_eigenvalue, safe_invert, symmetrize, SpdError, SpdMatrix};

/// Relative cutoff on singular values when pseudo-inverting the gain.
const PINV_REL_CUTOFF: f64 = 1e-10;

/// Slack (relative to `trace(P_post⁻¹)/dim`) allowed below zero when
/// validating the information gain for a *declared* intensity. Inverting an
/// ill-conditioned early-track covariance leaves noise of this order in `J`
/// even when the intensity is exactly right; a genuinely understated
/// intensity violates PSD by far more.
const KNOWN_ETA_FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsemError {
    #[error("track history has {len} estimates; decorrelation needs at least 2")]
    TooShort { len: usize },
    #[error("measurement dimension {dim} outside 1..=6")]
    BadMeasurementDim { dim: usize },
    #[error("history is flagged as downsampled; decorrelating it would understate uncertainty")]
    Downsampled,
    #[error(
        "observed block of the information gain is not positive definite (min eigenvalue {min_eigenvalue:.3e}); step carries no usable information or eta is too small"
    )]
    InformationGainNotSpd { min_eigenvalue: f64 },
    #[error("information gain indefinite (min eigenvalue {min_eigenvalue:.3e}); declared eta inconsistent with the history")]
    InfeasibleEta { min_eigenvalue: f64 },
    #[error(
        "gain rank {rank} below measurement dimension {required}; degenerate no-information step"
    )]
    RankDeficientGain { rank: usize, required: usize },
    #[error("eta estimation failed: {0}")]
    Estimation(#[from] EtaError),
    #[error("decorrelation step at epoch {epoch_s} failed: {source}")]
    Step {
        epoch_s: f64,
        #[source]
        source: Box<SsemError>,
    },
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Filter(#[from] EkfError),
}

/// A reconstructed state-space measurement: an M-vector in state units with
/// its covariance, equivalent in information content to the sensor's
/// original measurement at that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Ssem {
    pub epoch_s: f64,
    pub z: DVector<f64>,
    pub noise_cov: SpdMatrix,
    /// Process-noise intensity used when bridging to this epoch.
    pub eta_used: f64,
}

impl Ssem {
    pub fn to_measurement(&self) -> crate::ekf::Measurement {
        crate::ekf::Measurement {
            epoch_s: self.epoch_s,
            z: self.z.clone(),
            noise_cov: self.noise_cov.clone(),
            function: crate::ekf::MeasurementFunction::StateSubspace { dim: self.z.len() },
        }
    }
}

/// Source of the per-step process-noise intensity during decorrelation.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaProvider {
    /// The intensity the source filter used is known exactly.
    Known(f64),
    /// Estimate the minimal feasible intensity per step.
    Estimated(EtaOptions),
}

/// Per-step diagnostics; residuals are reported, not asserted, because an
/// estimated intensity legitimately leaves them nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub epoch_s: f64,
    pub eta_used: f64,
    /// Bisection evaluations; zero when the intensity was known.
    pub eta_iterations: u32,
    /// Smallest eigenvalue of the information gain at the chosen intensity.
    pub min_eig_info_gain: f64,
    /// Max-norm of the information gain outside its leading block, relative
    /// to the whole matrix.
    pub off_block_residual: f64,
    /// Max-norm of the trailing N−M gain columns relative to the gain.
    pub gain_tail_residual: f64,
}

/// Output of [`decorrelate_track`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decorrelation {
    pub ssems: Vec<Ssem>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// `J = P_post⁻¹ − P_pred⁻¹`, symmetrized. Indefinite output signals an
/// inconsistent prediction (typically an understated process noise).
pub fn information_gain(p_post: &SpdMatrix, p_pred: &SpdMatrix) -> Result<DMatrix<f64>, SsemError> {
    let j = safe_invert(p_post.matrix())? - safe_invert(p_pred.matrix())?;
    Ok(symmetrize(&j)?)
}

/// Inverts the leading M×M block of the information gain into the SSEM
/// measurement covariance. Returns the covariance together with the relative
/// max-norm of everything outside that block (a diagnostic, zero in exact
/// arithmetic when the true intensity was used).
pub fn extract_r(j: &DMatrix<f64>, m: usize) -> Result<(SpdMatrix, f64), SsemError> {
    if m == 0 || m > j.nrows() {
        return Err(SsemError::BadMeasurementDim { dim: m });
    }
    let block = symmetrize(&DMatrix::from_fn(m, m, |i, k| j[(i, k)]))?;
    let r = safe_invert(&block).map_err(|e| match e {
        SpdError::Singular { min_eigenvalue } => {
            SsemError::InformationGainNotSpd { min_eigenvalue }
        }
        other => SsemError::Spd(other),
    })?;

    let mut off: f64 = 0.0;
    for i in 0..j.nrows() {
        for k in 0..j.ncols() {
            if i >= m || k >= m {
                off = off.max(j[(i, k)].abs());
            }
        }
    }
    let scale = j.amax().max(f64::MIN_POSITIVE);
    let r_spd = SpdMatrix::new(r)?;
    Ok((r_spd, off / scale))
}

/// Recovers the Kalman gain from `[K 0] = I − P_post P_pred⁻¹`: the first M
/// columns, plus the relative max-norm of the discarded columns as a
/// diagnostic.
pub fn extract_gain(
    p_post: &SpdMatrix,
    p_pred: &SpdMatrix,
    m: usize,
) -> Result<(DMatrix<f64>, f64), SsemError> {
    let n = p_post.dim();
    if m == 0 || m > n {
        return Err(SsemError::BadMeasurementDim { dim: m });
    }
    let full = DMatrix::identity(n, n) - p_post.matrix() * safe_invert(p_pred.matrix())?;
    let gain = DMatrix::from_fn(n, m, |i, k| full[(i, k)]);
    let mut tail: f64 = 0.0;
    for i in 0..n {
        for k in m..n {
            tail = tail.max(full[(i, k)].abs());
        }
    }
    Ok((gain, tail / full.amax().max(f64::MIN_POSITIVE)))
}

/// Solves `K z = x_post − P_post P_pred⁻¹ x_pred` for the measurement via the
/// Moore-Penrose pseudoinverse, with singular values below
/// `1e-10 · σ_max` treated as zero.
pub fn reconstruct_z(
    gain: &DMatrix<f64>,
    x_post: &StateVector,
    p_post: &SpdMatrix,
    p_pred: &SpdMatrix,
    x_pred: &StateVector,
) -> Result<DVector<f64>, SsemError> {
    let m = gain.ncols();
    let svd = gain.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_REL_CUTOFF * sigma_max.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    if rank < m {
        return Err(SsemError::RankDeficientGain { rank, required: m });
    }
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|_| SsemError::RankDeficientGain { rank, required: m })?;

    let x_post_d = DVector::from_iterator(6, x_post.iter().copied());
    let x_pred_d = DVector::from_iterator(6, x_pred.iter().copied());
    let rhs = x_post_d - p_post.matrix() * safe_invert(p_pred.matrix())? * x_pred_d;
    Ok(pinv * rhs)
}

struct StepInputs<'a> {
    prev: &'a GaussianEstimate,
    cur: &'a GaussianEstimate,
}

fn decorrelate_step(
    inputs: &StepInputs<'_>,
    hist: &TrackHistory,
    eta: f64,
    eta_iterations: u32,
    min_eig_info_gain: Option<f64>,
    known_eta_tol: Option<f64>,
) -> Result<(Ssem, StepDiagnostics), SsemError> {
    let m = hist.meas_dim;
    let dt = inputs.cur.epoch_s - inputs.prev.epoch_s;
    let q6 = noise_basis(dt)? * eta;
    let q = SpdMatrix::new(DMatrix::from_fn(6, 6, |i, k| q6[(i, k)]))?;
    let pred = predict(inputs.prev, &hist.dynamics, &q, dt)?;

    let j = information_gain(&inputs.cur.cov, &pred.cov)?;
    let min_eig = match min_eig_info_gain {
        Some(e) => e,
        None => min_eigenvalue(&j)?,
    };
    if let Some(tol) = known_eta_tol {
        if min_eig < -tol {
            return Err(SsemError::InfeasibleEta {
                min_eigenvalue: min_eig,
            });
        }
    }

    let (r, off_block_residual) = extract_r(&j, m)?;
    let (gain, gain_tail_residual) = extract_gain(&inputs.cur.cov, &pred.cov, m)?;
    let z = reconstruct_z(
        &gain,
        &inputs.cur.mean,
        &inputs.cur.cov,
        &pred.cov,
        &pred.mean,
    )?;

    let ssem = Ssem {
        epoch_s: inputs.cur.epoch_s,
        z,
        noise_cov: r,
        eta_used: eta,
    };
    let diag = StepDiagnostics {
        epoch_s: inputs.cur.epoch_s,
        eta_used: eta,
        eta_iterations,
        min_eig_info_gain: min_eig,
        off_block_residual,
        gain_tail_residual,
    };
    Ok((ssem, diag))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Turns a track history into the equivalent independent measurement
/// sequence. The first estimate seeds the recursion and yields no output;
/// every later estimate yields one [`Ssem`].
///
/// With [`EtaProvider::Known`], an indefinite information gain is an error
/// (the declared intensity is inconsistent with the history). With
/// [`EtaProvider::Estimated`], the per-step minimal feasible intensity is
/// used instead.
pub fn decorrelate_track(
    hist: &TrackHistory,
    provider: &EtaProvider,
) -> Result<Decorrelation, SsemError> {
    if hist.downsampled {
        return Err(SsemError::Downsampled);
    }
    if hist.len() < 2 {
        return Err(SsemError::TooShort { len: hist.len() });
    }
    let m = hist.meas_dim;
    if m == 0 || m > 6 {
        return Err(SsemError::BadMeasurementDim { dim: m });
    }

    let pairs: Vec<StepInputs<'_>> = hist
        .estimates
        .windows(2)
        .map(|w| StepInputs {
            prev: &w[0],
            cur: &w[1],
        })
        .collect();

    // Resolve the per-step intensity first so an optional smoothing pass can
    // see the whole sequence.
    let mut etas: Vec<(f64, u32, Option<f64>)> = Vec::with_capacity(pairs.len());
    let mut smoothing = None;
    for inputs in &pairs {
        match provider {
            EtaProvider::Known(eta) => etas.push((*eta, 0, None)),
            EtaProvider::Estimated(opts) => {
                smoothing = opts.smoothing_window;
                let dt = inputs.cur.epoch_s - inputs.prev.epoch_s;
                let f = hist
                    .dynamics
                    .jacobian(&inputs.prev.mean, dt)
                    .map_err(SsemError::from)
                    .map_err(|e| SsemError::Step {
                        epoch_s: inputs.cur.epoch_s,
                        source: Box::new(e),
                    })?;
                let b = noise_basis(dt)
                    .map_err(SsemError::from)
                    .map_err(|e| SsemError::Step {
                        epoch_s: inputs.cur.epoch_s,
                        source: Box::new(e),
                    })?;
                let est: EtaEstimate =
                    estimate_eta(&inputs.cur.cov, &inputs.prev.cov, &f, &b, opts).map_err(|e| {
                        SsemError::Step {
                            epoch_s: inputs.cur.epoch_s,
                            source: Box::new(SsemError::Estimation(e)),
                        }
                    })?;
                etas.push((est.eta_hat, est.iterations, Some(est.min_eig_at_solution)));
            }
        }
    }

    // Median smoothing can only raise a step's intensity: a value below the
    // per-step minimum would be infeasible, so clamp from below.
    if let Some(window) = smoothing {
        let raw: Vec<f64> = etas.iter().map(|e| e.0).collect();
        let half = window / 2;
        for (i, entry) in etas.iter_mut().enumerate() {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(raw.len());
            let mut slice = raw[lo..hi].to_vec();
            let smoothed = median(&mut slice);
            if smoothed > entry.0 {
                entry.0 = smoothed;
                // The smoothed value exceeds the per-step minimum, so the
                // feasibility witness no longer applies.
                entry.2 = None;
            }
        }
    }

    let known_tol = |cur: &GaussianEstimate| -> Result<f64, SsemError> {
        let info = safe_invert(cur.cov.matrix())?;
        Ok(KNOWN_ETA_FEASIBILITY_TOL * info.trace().max(0.0) / 6.0)
    };

    let mut ssems = Vec::with_capacity(pairs.len());
    let mut diagnostics = Vec::with_capacity(pairs.len());
    for (inputs, (eta, iterations, min_eig)) in pairs.iter().zip(etas) {
        let tol = match provider {
            EtaProvider::Known(_) => Some(known_tol(inputs.cur).map_err(|e| SsemError::Step {
                epoch_s: inputs.cur.epoch_s,
                source: Box::new(e),
            })?),
            EtaProvider::Estimated(_) => None,
        };
        let (ssem, diag) =
            decorrelate_step(inputs, hist, eta, iterations, min_eig, tol).map_err(|e| {
                SsemError::Step {
                    epoch_s: inputs.cur.epoch_s,
                    source: Box::new(e),
                }
            })?;
        ssems.push(ssem);
        diagnostics.push(diag);
    }

    Ok(Decorrelation { ssems, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{cv_transition, make_state, DynamicsModel, ProcessNoiseModel};
    use crate::ekf::{run_filter, update, Measurement, MeasurementFunction};
    use nalgebra::{Matrix6, Vector3, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn to_dyn(m: &Matrix6<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| m[(i, j)])
    }

    fn random_spd6(rng: &mut ChaCha8Rng, scale: f64) -> SpdMatrix {
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new((&g * g.transpose() + DMatrix::identity(6, 6)) * scale).unwrap()
    }

    #[test]
    fn information_gain_zero_for_equal_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p = random_spd6(&mut rng, 4.0);
        let j = information_gain(&p, &p).unwrap();
        assert!(j.amax() <= 1e-12 * safe_invert(p.matrix()).unwrap().amax());
    }

    #[test]
    fn information_gain_recovers_diagonal_increment() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p_pred = random_spd6(&mut rng, 2.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 0.5, 0.25, 0.125]));
        let info_post = safe_invert(p_pred.matrix()).unwrap() + &d;
        let p_post = SpdMatrix::new(safe_invert(&info_post).unwrap()).unwrap();
        let j = information_gain(&p_post, &p_pred).unwrap();
        let rel = (&j - &d).amax() / d.amax();
        assert!(rel <= 1e-8, "recovered increment off by {rel}");
    }

    #[test]
    fn extract_r_diagonal_example() {
        let mut j = DMatrix::zeros(6, 6);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 4.0;
        j[(2, 2)] = 9.0;
        let (r, off) = extract_r(&j, 3).unwrap();
        assert!((r.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((r.matrix()[(1, 1)] - 0.25).abs() < 1e-12);
        assert!((r.matrix()[(2, 2)] - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(off, 0.0);
    }

    #[test]
    fn extract_r_rejects_informationless_block() {
        let mut j = DMatrix::zeros(6, 6);
        // Information only in the velocity block.
        for i in 3..6 {
            j[(i, i)] = 1.0;
        }
        assert!(matches!(
            extract_r(&j, 3),
            Err(SsemError::InformationGainNotSpd { .. })
        ));
    }

    #[test]
    fn extract_gain_zero_when_no_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let p = random_spd6(&mut rng, 3.0);
        let (gain, tail) = extract_gain(&p, &p, 3).unwrap();
        assert!(gain.amax() <= 1e-10);
        assert!(tail <= 1.0); // tail of a zero matrix is 0/eps-guarded scale
    }

    #[test]
    fn reconstruct_z_inverse_case_and_rank_error() {
        // M = N with an invertible gain reduces the pseudoinverse to the
        // inverse.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let p_pred = random_spd6(&mut rng, 2.0);
        let r_full = SpdMatrix::new(DMatrix::identity(6, 6) * 0.5).unwrap();
        let info = safe_invert(p_pred.matrix()).unwrap() + safe_invert(r_full.matrix()).unwrap();
        let p_post = SpdMatrix::new(safe_invert(&info).unwrap()).unwrap();

        let x_pred = Vector6::from_fn(|i, _| i as f64);
        let x_post = Vector6::from_fn(|i, _| i as f64 + 0.5);
        let (gain, _) = extract_gain(&p_post, &p_pred, 6).unwrap();
        let z = reconstruct_z(&gain, &x_post, &p_post, &p_pred, &x_pred).unwrap();

        let direct = gain.clone().try_inverse().unwrap()
            * (DVector::from_iterator(6, x_post.iter().copied())
                - p_post.matrix()
                    * safe_invert(p_pred.matrix()).unwrap()
                    * DVector::from_iterator(6, x_pred.iter().copied()));
        assert!((z - direct).amax() <= 1e-8);

        // Zero gain (no information) is rank deficient.
        let zero_gain = DMatrix::zeros(6, 3);
        let err = reconstruct_z(&zero_gain, &x_post, &p_post, &p_pred, &x_pred).unwrap_err();
        assert!(matches!(err, SsemError::RankDeficientGain { .. }));
    }

    /// Linear-Gaussian oracle: a CV filter observing positions with known
    /// noise; every original measurement and covariance must be recovered.
    fn linear_oracle_history(
        steps: usize,
        eta: f64,
        seed: u64,
    ) -> (TrackHistory, Vec<Measurement>) {
        let model = DynamicsModel::ConstantVelocity;
        let noise = ProcessNoiseModel::new(eta).unwrap();
        let dt = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut truth = make_state(
            Vector3::new(5e3, -3e3, 8e3),
            Vector3::new(25.0, -40.0, 10.0),
        );
        let r = SpdMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 16.0, 4.0])).unwrap();
        let b = crate::dynamics::noise_basis(dt).unwrap();
        let chol = to_dyn(&b).cholesky().unwrap();

        let mut measurements = Vec::with_capacity(steps);
        for k in 1..=steps {
            truth = model.propagate(&truth, dt).unwrap();
            if eta > 0.0 {
                let xi = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = chol.l() * xi * eta.sqrt();
                for i in 0..6 {
                    truth[i] += w[i];
                }
            }
            let z = DVector::from_vec(vec![
                truth[0] + 3.0 * rng.sample::<f64, _>(StandardNormal),
                truth[1] + 4.0 * rng.sample::<f64, _>(StandardNormal),
                truth[2] + 2.0 * rng.sample::<f64, _>(StandardNormal),
            ]);
            measurements.push(Measurement {
                epoch_s: k as f64,
                z,
                noise_cov: r.clone(),
                function: MeasurementFunction::StateSubspace { dim: 3 },
            });
        }

        let init = GaussianEstimate {
            epoch_s: 0.0,
            mean: make_state(Vector3::new(5.1e3, -2.9e3, 8.05e3), Vector3::zeros()),
            cov: SpdMatrix::from_diagonal(&DVector::from_vec(vec![
                1e4, 1e4, 1e4, 2.5e3, 2.5e3, 2.5e3,
            ]))
            .unwrap(),
        };
        let hist = run_filter(&measurements, &model, &noise, &init).unwrap();
        (hist, measurements)
    }

    #[test]
    fn linear_filter_exact_recovery() {
        let eta = 0.05;
        let (hist, measurements) = linear_oracle_history(50, eta, 99);
        let out = decorrelate_track(&hist, &EtaProvider::Known(eta)).unwrap();
        assert_eq!(out.ssems.len(), measurements.len());

        for (ssem, original) in out.ssems.iter().zip(&measurements) {
            assert_eq!(ssem.epoch_s, original.epoch_s);
            let z_rel = (&ssem.z - &original.z).amax() / original.z.amax();
            assert!(z_rel <= 1e-8, "z mismatch {z_rel}");
            let r_rel = (ssem.noise_cov.matrix() - original.noise_cov.matrix()).amax()
                / original.noise_cov.matrix().amax();
            assert!(r_rel <= 1e-8, "R mismatch {r_rel}");
        }
    }

    #[test]
    fn round_trip_refilter_reproduces_history() {
        let eta = 0.02;
        let (hist, _) = linear_oracle_history(60, eta, 123);
        let out = decorrelate_track(&hist, &EtaProvider::Known(eta)).unwrap();

        let refiltered = run_filter(
            &out.ssems
                .iter()
                .map(Ssem::to_measurement)
                .collect::<Vec<_>>(),
            &hist.dynamics,
            &ProcessNoiseModel::new(eta).unwrap(),
            &hist.estimates[0],
        )
        .unwrap();

        assert_eq!(refiltered.len(), hist.len());
        for (a, b) in refiltered.estimates.iter().zip(&hist.estimates) {
            let mean_rel = (a.mean - b.mean).norm() / b.mean.norm();
            assert!(mean_rel <= 1e-6, "mean diverged by {mean_rel}");
            let cov_rel = (a.cov.matrix() - b.cov.matrix()).norm() / b.cov.matrix().norm();
            assert!(cov_rel <= 1e-6, "cov diverged by {cov_rel}");
        }
    }

    #[test]
    fn estimated_eta_matches_known_on_linear_track() {
        let eta = 0.01;
        let (hist, _) = linear_oracle_history(40, eta, 7);
        let out = decorrelate_track(&hist, &EtaProvider::Estimated(EtaOptions::default())).unwrap();
        for diag in &out.diagnostics {
            let rel = (diag.eta_used - eta).abs() / eta;
            assert!(
                rel <= 1e-4,
                "step at {}: eta {} vs true {eta}",
                diag.epoch_s,
                diag.eta_used
            );
        }
    }

    #[test]
    fn extracted_r_antitone_in_eta() {
        // A larger declared intensity attributes more of the posterior's
        // tightness to the measurement, so the recovered covariance shrinks.
        let eta = 0.01;
        let (hist, _) = linear_oracle_history(10, eta, 11);
        let grid = [0.01, 0.02, 0.1, 1.0];
        let mut previous: Option<Vec<DMatrix<f64>>> = None;
        for test_eta in grid {
            let out = decorrelate_track(&hist, &EtaProvider::Known(test_eta)).unwrap();
            let rs: Vec<DMatrix<f64>> = out
                .ssems
                .iter()
                .map(|s| s.noise_cov.matrix().clone())
                .collect();
            if let Some(prev) = previous {
                for (smaller, bigger) in rs.iter().zip(prev.iter()) {
                    let tol = 1e-9 * bigger.trace();
                    assert!(
                        crate::spd::psd_dominates(bigger, smaller, tol).unwrap(),
                        "R should shrink as eta grows"
                    );
                }
            }
            previous = Some(rs);
        }
    }

    #[test]
    fn identical_estimates_with_zero_eta_degenerate() {
        let est = GaussianEstimate {
            epoch_s: 0.0,
            mean: make_state(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()),
            cov: SpdMatrix::identity(6),
        };
        let mut second = est.clone();
        second.epoch_s = 1.0;
        let hist =
            TrackHistory::new(vec![est, second], DynamicsModel::ConstantVelocity, 3, None).unwrap();
        let err = decorrelate_track(&hist, &EtaProvider::Known(0.0)).unwrap_err();
        match err {
            SsemError::Step { source, .. } => assert!(
                matches!(
                    *source,
                    SsemError::InformationGainNotSpd { .. } | SsemError::InfeasibleEta { .. }
                ),
                "unexpected step error {source:?}"
            ),
            other => panic!("expected step error, got {other:?}"),
        }
    }

    #[test]
    fn downsampled_history_is_rejected() {
        let (mut hist, _) = linear_oracle_history(5, 0.01, 1);
        hist.downsampled = true;
        assert!(matches!(
            decorrelate_track(&hist, &EtaProvider::Known(0.01)),
            Err(SsemError::Downsampled)
        ));
    }

    #[test]
    fn short_history_is_rejected() {
        let (mut hist, _) = linear_oracle_history(5, 0.01, 2);
        hist.estimates.truncate(1);
        assert!(matches!(
            decorrelate_track(&hist, &EtaProvider::Known(0.01)),
            Err(SsemError::TooShort { len: 1 })
        ));
    }

    #[test]
    fn information_gain_matches_ekf_update_identity() {
        // From a recorded linear update, J equals HᵀR⁻¹H.
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let pred = GaussianEstimate {
            epoch_s: 0.0,
            mean: Vector6::from_fn(|i, _| i as f64 * 2.0),
            cov: random_spd6(&mut rng, 5.0),
        };
        let r = SpdMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5])).unwrap();
        let f = MeasurementFunction::StateSubspace { dim: 3 };
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let post = update(&pred, &z, &r, &f).unwrap();

        let j = information_gain(&post.cov, &pred.cov).unwrap();
        let h = f.jacobian_at(&pred.mean).unwrap();
        let expected = h.transpose() * safe_invert(r.matrix()).unwrap() * h;
        let rel = (&j - &expected).norm() / expected.norm();
        assert!(rel <= 1e-6, "J vs HᵀR⁻¹H mismatch {rel}");
    }

    #[test]
    fn smoothing_window_only_raises_eta() {
        let eta = 0.01;
        let (hist, _) = linear_oracle_history(30, eta, 13);
        let raw = decorrelate_track(&hist, &EtaProvider::Estimated(EtaOptions::default())).unwrap();
        let smoothed = decorrelate_track(
            &hist,
            &EtaProvider::Estimated(EtaOptions {
                smoothing_window: Some(5),
                ..EtaOptions::default()
            }),
        )
        .unwrap();
        for (s, r) in smoothed.diagnostics.iter().zip(&raw.diagnostics) {
            assert!(s.eta_used >= r.eta_used - 1e-15);
        }
    }

    #[test]
    fn cv_transition_is_shared_between_filter_and_reconstruction() {
        // Decorrelation rebuilds the same predicted covariance the filter
        // used internally; equality of transition matrices is what makes the
        // recovery exact.
        let f1 = cv_transition(2.0).unwrap();
        let f2 = DynamicsModel::ConstantVelocity
            .jacobian(&Vector6::zeros(), 2.0)
            .unwrap();
        assert_eq!(f1, f2);
    }
}
