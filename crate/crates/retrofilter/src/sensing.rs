//! Geodesy, sensor-frame construction, the range/direction-cosine (RUV)
//! measurement function, and the phased-array radar noise model used to
//! generate synthetic detections.

use nalgebra::{DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dynamics::{position, StateVector};
use crate::spd::{SpdError, SpdMatrix};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299792458.0;

/// WGS84 semi-major axis, meters.
pub const WGS84_A: f64 = 6378137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257223563;

const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("latitude {lat_deg}° outside [-90, 90]")]
    LatitudeOutOfRange { lat_deg: f64 },
    #[error("longitude {lon_deg}° outside [-180, 180]")]
    LongitudeOutOfRange { lon_deg: f64 },
    #[error("point too close to Earth's center for geodetic conversion")]
    NearEarthCenter,
    #[error("geodetic iteration failed to converge after {iterations} iterations")]
    GeodeticNonConvergence { iterations: usize },
    #[error("sensor frame requires a nonzero baseline")]
    ZeroBaseline,
    #[error("target at zero range from sensor")]
    ZeroRange,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("detection direction cosines violate u² + v² < 1")]
    InvalidDirectionCosines,
    #[error(transparent)]
    Spd(#[from] SpdError),
}

/// Geodetic position on the WGS84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticCoord {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

impl GeodeticCoord {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self, SensingError> {
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(SensingError::LatitudeOutOfRange { lat_deg });
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(SensingError::LongitudeOutOfRange { lon_deg });
        }
        Ok(Self {
            lat_deg,
            lon_deg,
            alt_m,
        })
    }
}

/// WGS84 geodetic to Earth-centered Cartesian.
pub fn lla_to_ecr(g: &GeodeticCoord) -> Vector3<f64> {
    let lat = g.lat_deg.to_radians();
    let lon = g.lon_deg.to_radians();
    let sin_lat = lat.sin();
    let cos_lat = lat.cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + g.alt_m) * cos_lat * lon.cos(),
        (n + g.alt_m) * cos_lat * lon.sin(),
        (n * (1.0 - WGS84_E2) + g.alt_m) * sin_lat,
    )
}

/// Iterative geodetic inverse, converged to 1e-12 relative latitude change.
pub fn ecr_to_lla(p: &Vector3<f64>) -> Result<GeodeticCoord, SensingError> {
    if p.norm() <= 1e5 {
        return Err(SensingError::NearEarthCenter);
    }
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();

    // Exactly polar: the iteration below would divide by cos(lat).
    if rho < 1e-9 * p.z.abs() {
        let b = WGS84_A * (1.0 - WGS84_F);
        let lat = if p.z >= 0.0 { 90.0 } else { -90.0 };
        return GeodeticCoord::new(lat, lon.to_degrees(), p.z.abs() - b);
    }

    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    let max_iterations = 20;
    for _ in 0..max_iterations {
        let sin_lat = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        let next = (p.z + WGS84_E2 * n * sin_lat).atan2(rho);
        let delta = (next - lat).abs();
        lat = next;
        if delta <= 1e-12 * lat.abs().max(1.0) {
            let sin_lat = lat.sin();
            let cos_lat = lat.cos();
            let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
            // Use whichever trig branch is better conditioned for altitude.
            let alt = if cos_lat.abs() > sin_lat.abs() {
                rho / cos_lat - n
            } else {
                p.z / sin_lat - n * (1.0 - WGS84_E2)
            };
            return GeodeticCoord::new(lat.to_degrees(), lon.to_degrees(), alt);
        }
    }
    Err(SensingError::GeodeticNonConvergence {
        iterations: max_iterations,
    })
}

/// Geodetic east/north/up unit vectors at an ECR point.
type EnuAxes = (Vector3<f64>, Vector3<f64>, Vector3<f64>);

fn local_enu(site: &Vector3<f64>) -> Result<EnuAxes, SensingError> {
    let g = ecr_to_lla(site)?;
    let lat = g.lat_deg.to_radians();
    let lon = g.lon_deg.to_radians();
    let east = Vector3::new(-lon.sin(), lon.cos(), 0.0);
    let up = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
    let north = up.cross(&east);
    Ok((east, north, up))
}

/// Rotation whose rows form a sensor-centered frame with the third row (the
/// boresight) pointing from `site_ecr` to `target_ecr`.
///
/// The first row is the horizontal direction orthogonal to the boresight,
/// derived from local east; when the boresight is vertical that direction
/// degenerates and the frame falls back to local north. Deterministic so
/// that identical inputs always produce the identical frame.
pub fn sensor_frame(
    site_ecr: &Vector3<f64>,
    target_ecr: &Vector3<f64>,
) -> Result<Matrix3<f64>, SensingError> {
    let baseline = target_ecr - site_ecr;
    let range = baseline.norm();
    if range < 1e-9 {
        return Err(SensingError::ZeroBaseline);
    }
    let boresight = baseline / range;
    let (_, north, up) = local_enu(site_ecr)?;

    let mut x_axis = boresight.cross(&up);
    if x_axis.norm() < 1e-9 {
        x_axis = north - boresight * north.dot(&boresight);
    }
    let x_axis = x_axis / x_axis.norm();
    let y_axis = boresight.cross(&x_axis);

    Ok(Matrix3::from_rows(&[
        x_axis.transpose(),
        y_axis.transpose(),
        boresight.transpose(),
    ]))
}

/// Range and direction cosines of a state's position in a sensor frame:
/// with `(x, y, z)` the frame-relative position, returns
/// `(√(x²+y²+z²), x/r, y/r)`.
pub fn h_ruv(
    x: &StateVector,
    site_ecr: &Vector3<f64>,
    frame: &Matrix3<f64>,
) -> Result<Vector3<f64>, SensingError> {
    let d = frame * (position(x) - site_ecr);
    let r = d.norm();
    if r < 1e-9 {
        return Err(SensingError::ZeroRange);
    }
    Ok(Vector3::new(r, d.x / r, d.y / r))
}

/// Phased-array radar model: waveform bandwidth, beamwidth, monopulse error
/// slope, and the reference point anchoring the fourth-power SNR law.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    pub bandwidth_hz: f64,
    pub beamwidth_rad: f64,
    pub error_slope: f64,
    /// Reference SNR (linear) for a target of `ref_rcs_sqm` at `ref_range_m`.
    pub ref_snr: f64,
    pub ref_range_m: f64,
    pub ref_rcs_sqm: f64,
    pub site: GeodeticCoord,
}

impl RadarConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        for (name, value) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("beamwidth_rad", self.beamwidth_rad),
            ("error_slope", self.error_slope),
            ("ref_snr", self.ref_snr),
            ("ref_range_m", self.ref_range_m),
            ("ref_rcs_sqm", self.ref_rcs_sqm),
        ] {
            if value <= 0.0 {
                return Err(SensingError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    pub fn site_ecr(&self) -> Vector3<f64> {
        lla_to_ecr(&self.site)
    }

    /// `ρ = ρ₀ (γ/γ₀)(r₀/r)⁴`.
    pub fn snr_at(&self, range_m: f64, rcs_sqm: f64) -> Result<f64, SensingError> {
        if range_m <= 0.0 {
            return Err(SensingError::NonPositive {
                name: "range_m",
                value: range_m,
            });
        }
        if rcs_sqm <= 0.0 {
            return Err(SensingError::NonPositive {
                name: "rcs_sqm",
                value: rcs_sqm,
            });
        }
        let ratio = self.ref_range_m / range_m;
        Ok(self.ref_snr * (rcs_sqm / self.ref_rcs_sqm) * ratio.powi(4))
    }

    /// `diag(σ_r², σ_u², σ_v²)` with `σ_r = c/(2B√ρ)` and
    /// `σ_u = σ_v = φ/(k_m√ρ)`. No accuracy floor is imposed at high SNR.
    pub fn measurement_noise(&self, snr: f64) -> Result<SpdMatrix, SensingError> {
        if snr <= 0.0 {
            return Err(SensingError::NonPositive {
                name: "snr",
                value: snr,
            });
        }
        let sqrt_snr = snr.sqrt();
        let sigma_r = SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz * sqrt_snr);
        let sigma_uv = self.beamwidth_rad / (self.error_slope * sqrt_snr);
        let diag = DVector::from_vec(vec![
            sigma_r * sigma_r,
            sigma_uv * sigma_uv,
            sigma_uv * sigma_uv,
        ]);
        Ok(SpdMatrix::from_diagonal(&diag)?)
    }
}

/// A radar detection: range and direction cosines plus the diagonal noise
/// covariance in effect, and the sensor frame the measurement was taken in.
#[derive(Debug, Clone, PartialEq)]
pub struct RuvMeasurement {
    pub epoch_s: f64,
    /// `(range m, u, v)`.
    pub z: Vector3<f64>,
    pub noise_cov: SpdMatrix,
    pub site_ecr: Vector3<f64>,
    pub frame: Matrix3<f64>,
}

fn build_detection(
    cfg: &RadarConfig,
    x_true: &StateVector,
    rcs_sqm: f64,
    epoch_s: f64,
    noise: Option<&mut dyn FnMut() -> Vector3<f64>>,
) -> Result<Option<RuvMeasurement>, SensingError> {
    cfg.validate()?;
    let site = cfg.site_ecr();
    let target = position(x_true);
    let los = target - site;
    let (_, _, up) = local_enu(&site)?;
    // Elevation above the local horizontal plane must be positive.
    if up.dot(&los) <= 0.0 {
        return Ok(None);
    }
    let frame = sensor_frame(&site, &target)?;
    let ideal = h_ruv(x_true, &site, &frame)?;
    let snr = cfg.snr_at(ideal.x, rcs_sqm)?;
    let noise_cov = cfg.measurement_noise(snr)?;
    let z = match noise {
        Some(draw) => {
            let sigmas = Vector3::new(
                noise_cov.matrix()[(0, 0)].sqrt(),
                noise_cov.matrix()[(1, 1)].sqrt(),
                noise_cov.matrix()[(2, 2)].sqrt(),
            );
            let w = draw();
            ideal + sigmas.component_mul(&w)
        }
        None => ideal,
    };
    if z.y * z.y + z.z * z.z >= 1.0 {
        return Err(SensingError::InvalidDirectionCosines);
    }
    Ok(Some(RuvMeasurement {
        epoch_s,
        z,
        noise_cov,
        site_ecr: site,
        frame,
    }))
}

/// Simulates a detection of `x_true`, drawing measurement noise from the
/// caller's random stream. Returns `None` (not an error) when the target is
/// below the sensor's horizon.
pub fn simulate_detection<R: Rng>(
    cfg: &RadarConfig,
    x_true: &StateVector,
    rcs_sqm: f64,
    epoch_s: f64,
    rng: &mut R,
) -> Result<Option<RuvMeasurement>, SensingError> {
    let mut draw = || {
        Vector3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        )
    };
    build_detection(cfg, x_true, rcs_sqm, epoch_s, Some(&mut draw))
}

/// Noise-free detection of `x_true` (measurement variances still reported).
pub fn ideal_detection(
    cfg: &RadarConfig,
    x_true: &StateVector,
    rcs_sqm: f64,
    epoch_s: f64,
) -> Result<Option<RuvMeasurement>, SensingError> {
    build_detection(cfg, x_true, rcs_sqm, epoch_s, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_state;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_radar() -> RadarConfig {
        RadarConfig {
            bandwidth_hz: 100e6,
            beamwidth_rad: 1e-3,
            error_slope: 1.6,
            ref_snr: 1.0,
            ref_range_m: 2.7e6,
            ref_rcs_sqm: 1.0,
            site: GeodeticCoord::new(0.0, 0.0, 0.0).unwrap(),
        }
    }

    #[test]
    fn lla_to_ecr_equator_and_pole() {
        let equator = GeodeticCoord::new(0.0, 0.0, 0.0).unwrap();
        let p = lla_to_ecr(&equator);
        assert_relative_eq!(p.x, WGS84_A, max_relative = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-6);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-6);

        let pole = GeodeticCoord::new(90.0, 12.0, 0.0).unwrap();
        let p = lla_to_ecr(&pole);
        let b = WGS84_A * (1.0 - WGS84_F);
        assert!(p.x.abs() < 1e-6 && p.y.abs() < 1e-6);
        assert_relative_eq!(p.z, b, max_relative = 1e-12);
    }

    #[test]
    fn geodetic_round_trip() {
        let cases = [
            GeodeticCoord::new(2.0, 5.0, 0.0).unwrap(),
            GeodeticCoord::new(10.0, 10.0, 0.0).unwrap(),
            GeodeticCoord::new(45.0, 45.0, 100_000.0).unwrap(),
            GeodeticCoord::new(-60.0, -170.0, 5_000.0).unwrap(),
            GeodeticCoord::new(89.0, 0.0, 1_000.0).unwrap(),
        ];
        for g in cases {
            let back = ecr_to_lla(&lla_to_ecr(&g)).unwrap();
            assert!((back.lat_deg - g.lat_deg).abs() <= 1e-9, "{g:?}");
            assert!((back.lon_deg - g.lon_deg).abs() <= 1e-9, "{g:?}");
            assert!((back.alt_m - g.alt_m).abs() <= 1e-4, "{g:?}");
        }
    }

    #[test]
    fn geodetic_coord_validates_ranges() {
        assert!(matches!(
            GeodeticCoord::new(91.0, 0.0, 0.0),
            Err(SensingError::LatitudeOutOfRange { .. })
        ));
        assert!(matches!(
            GeodeticCoord::new(0.0, 200.0, 0.0),
            Err(SensingError::LongitudeOutOfRange { .. })
        ));
    }

    #[test]
    fn sensor_frame_orthonormal_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let site = lla_to_ecr(&GeodeticCoord::new(0.0, 0.0, 0.0).unwrap());
        for _ in 0..20 {
            let offset = Vector3::new(
                rng.random_range(-1e6..1e6),
                rng.random_range(-1e6..1e6),
                rng.random_range(1e5..1e6),
            );
            let target = site + offset;
            let frame = sensor_frame(&site, &target).unwrap();
            let should_be_id = frame * frame.transpose();
            assert_relative_eq!(should_be_id, Matrix3::identity(), epsilon = 1e-12);
            assert_relative_eq!(frame.determinant(), 1.0, max_relative = 1e-12);

            // Boresight maps the baseline onto (0, 0, range).
            let mapped = frame * (target - site);
            assert!(mapped.x.abs() < 1e-6 && mapped.y.abs() < 1e-6);
            assert_relative_eq!(mapped.z, (target - site).norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn sensor_frame_vertical_boresight_falls_back() {
        let site = lla_to_ecr(&GeodeticCoord::new(10.0, 20.0, 0.0).unwrap());
        let (_, _, up) = local_enu(&site).unwrap();
        let target = site + up * 5e5;
        let frame = sensor_frame(&site, &target).unwrap();
        assert_relative_eq!(
            frame * frame.transpose(),
            Matrix3::identity(),
            epsilon = 1e-12
        );
        assert_relative_eq!(frame.determinant(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sensor_frame_is_bitwise_deterministic() {
        let site = lla_to_ecr(&GeodeticCoord::new(0.0, 0.0, 0.0).unwrap());
        let target = site + Vector3::new(3.1e5, -2.7e5, 6.4e5);
        let a = sensor_frame(&site, &target).unwrap();
        let b = sensor_frame(&site, &target).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sensor_frame_rejects_zero_baseline() {
        let site = lla_to_ecr(&GeodeticCoord::new(0.0, 0.0, 0.0).unwrap());
        assert!(matches!(
            sensor_frame(&site, &site),
            Err(SensingError::ZeroBaseline)
        ));
    }

    #[test]
    fn h_ruv_on_boresight_and_45_degrees() {
        let site = Vector3::zeros();
        let frame = Matrix3::identity();

        let x = make_state(Vector3::new(0.0, 0.0, 1000.0), Vector3::zeros());
        let z = h_ruv(&x, &site, &frame).unwrap();
        assert_relative_eq!(z, Vector3::new(1000.0, 0.0, 0.0), max_relative = 1e-12);

        let r = 1000.0 * 2.0_f64.sqrt();
        let x = make_state(Vector3::new(1000.0, 0.0, 1000.0), Vector3::zeros());
        let z = h_ruv(&x, &site, &frame).unwrap();
        assert_relative_eq!(z.x, r, max_relative = 1e-12);
        assert_relative_eq!(z.y, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        assert_relative_eq!(z.z, 0.0, epsilon = 1e-12);
        assert!(z.y * z.y + z.z * z.z <= 1.0);
    }

    #[test]
    fn snr_fourth_power_law() {
        let cfg = test_radar();
        assert_relative_eq!(cfg.snr_at(2.7e6, 1.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.snr_at(1.35e6, 1.0).unwrap(), 16.0, max_relative = 1e-12);
        assert_relative_eq!(
            cfg.snr_at(5.4e6, 1.0).unwrap(),
            1.0 / 16.0,
            max_relative = 1e-12
        );
        assert!(cfg.snr_at(-1.0, 1.0).is_err());
    }

    #[test]
    fn measurement_noise_values_and_scaling() {
        let cfg = test_radar();
        let r1 = cfg.measurement_noise(1.0).unwrap();
        let sigma_r = r1.matrix()[(0, 0)].sqrt();
        let sigma_u = r1.matrix()[(1, 1)].sqrt();
        assert_relative_eq!(sigma_r, SPEED_OF_LIGHT / 2.0e8, max_relative = 1e-12);
        assert!((sigma_r - 1.4990).abs() < 1e-3);
        assert_relative_eq!(sigma_u, 6.25e-4, max_relative = 1e-12);

        let r4 = cfg.measurement_noise(4.0).unwrap();
        assert_relative_eq!(
            r4.matrix()[(0, 0)].sqrt(),
            sigma_r / 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            r4.matrix()[(1, 1)].sqrt(),
            sigma_u / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn measurement_noise_decreasing_in_snr() {
        let cfg = test_radar();
        let snrs = [0.5, 1.0, 2.0, 8.0, 100.0];
        let mats: Vec<_> = snrs
            .iter()
            .map(|s| cfg.measurement_noise(*s).unwrap())
            .collect();
        for pair in mats.windows(2) {
            for i in 0..3 {
                assert!(pair[1].matrix()[(i, i)] < pair[0].matrix()[(i, i)]);
            }
        }
    }

    #[test]
    fn ideal_detection_matches_h_ruv() {
        let cfg = test_radar();
        let site = cfg.site_ecr();
        let target = site + Vector3::new(5e5, 2e5, 4e5);
        let x = make_state(target, Vector3::new(100.0, 0.0, 0.0));
        let det = ideal_detection(&cfg, &x, 1.0, 0.0).unwrap().unwrap();
        let frame = sensor_frame(&site, &target).unwrap();
        let expected = h_ruv(&x, &site, &frame).unwrap();
        assert_eq!(det.z, expected);
        // Boresight frozen at the true target, so u = v = 0.
        assert!(det.z.y.abs() < 1e-12 && det.z.z.abs() < 1e-12);
    }

    #[test]
    fn below_horizon_yields_no_detection() {
        let cfg = test_radar();
        let site = cfg.site_ecr();
        // A point well below the local horizontal plane.
        let target = site * 0.5;
        let x = make_state(target, Vector3::zeros());
        assert!(ideal_detection(&cfg, &x, 1.0, 0.0).unwrap().is_none());
    }

    #[test]
    fn detection_stream_is_deterministic() {
        let cfg = test_radar();
        let site = cfg.site_ecr();
        let x = make_state(site + Vector3::new(3e5, 3e5, 6e5), Vector3::zeros());

        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for k in 0..10 {
            let da = simulate_detection(&cfg, &x, 1.0, k as f64, &mut a).unwrap();
            let db = simulate_detection(&cfg, &x, 1.0, k as f64, &mut b).unwrap();
            assert_eq!(da, db);
        }
    }

    #[test]
    fn noise_sample_covariance_matches_model() {
        let cfg = test_radar();
        let site = cfg.site_ecr();
        let x = make_state(site + Vector3::new(3e5, 3e5, 6e5), Vector3::zeros());
        let ideal = ideal_detection(&cfg, &x, 1.0, 0.0).unwrap().unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 10_000;
        let mut sum = Matrix3::zeros();
        for _ in 0..n {
            let det = simulate_detection(&cfg, &x, 1.0, 0.0, &mut rng)
                .unwrap()
                .unwrap();
            let w = det.z - ideal.z;
            sum += w * w.transpose();
        }
        let sample = sum / n as f64;
        let model = Matrix3::from_fn(|i, j| ideal.noise_cov.matrix()[(i, j)]);
        let err = (sample - model).norm() / model.norm();
        assert!(err <= 0.05, "sample covariance off by {err}");
    }
}
