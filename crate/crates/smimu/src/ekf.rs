//! Error-state Kalman filter over the attitude error vector.
//!
//! The error state is the small-angle attitude error in the navigation
//! frame. With no bias states the system matrix is zero, so the transition
//! matrix is the identity and prediction reduces to rotating the process
//! noise into the navigation frame: `P ← P + R·Q_w·Rᵀ·dt`. In array mode the
//! per-epoch process noise is the gated rate covariance from the angular
//! solver; a conventional gyro feeds a fixed `σ_g²·I` instead.
//!
//! Measurement updates use the gravity direction under momentarily zero
//! acceleration. Gravity carries no information about rotation around
//! itself, so the gain is projected onto the plane orthogonal to gravity
//! (heading is never touched) and the covariance is updated in Joseph form,
//! which stays consistent and positive semidefinite for the projected gain.

use nalgebra::{Matrix3, Vector3};

use crate::earth::EarthModel;
use crate::error::{Error, Result};
use crate::sgf::GravityEstimate;
use crate::so3::{body_rate, propagate, rotation_exp, skew, Dcm};
use crate::transform::SymmetricPairMeasurement;

/// Default initial attitude-error variance, rad².
pub const DEFAULT_INITIAL_P: f64 = 1e-4;

/// Tilt-covariance boost applied before each gravity update, as a multiple
/// of the tilt variance a single gravity observation carries. Gated epochs
/// feed zero process noise, yet the gate cannot exclude rotation below its
/// detection floor; without the boost a long run of updates drives the gain
/// to zero and the filter ignores the very measurements that could catch
/// such a rotation. Boosting before the gain keeps the posterior covariance
/// consistent with the actual error at equilibrium.
pub const UPDATE_FLOOR_GAIN: f64 = 4.0;

/// Attitude filter state.
#[derive(Debug, Clone)]
pub struct EkfState {
    /// Navigation solution (body-to-navigation rotation).
    pub dcm: Dcm,
    /// Attitude-error covariance, rad².
    pub p: Matrix3<f64>,
    /// Process noise of the current epoch, body-frame rate covariance.
    pub q_w: Matrix3<f64>,
    /// Measurement noise of the gravity observation.
    pub q_nu: Matrix3<f64>,
}

impl EkfState {
    pub fn new(dcm: Dcm, initial_p: f64) -> Self {
        Self {
            dcm,
            p: Matrix3::from_diagonal_element(initial_p),
            q_w: Matrix3::zeros(),
            q_nu: Matrix3::zeros(),
        }
    }
}

/// Diagnostics of one measurement update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateReport {
    /// Gravity residual in the navigation frame, m/s².
    pub innovation: Vector3<f64>,
    /// Applied attitude correction (rotation vector, navigation frame), rad.
    pub correction: Vector3<f64>,
}

/// Propagate attitude and covariance over one step.
///
/// When every rate axis is gated to exactly zero the attitude is held: the
/// gate has resolved the epoch as rotation-free, so neither the body rate
/// nor the earth-rate compensation is applied, and with zero process noise
/// the covariance holds as well.
pub fn predict(
    state: &mut EkfState,
    omega_gated: &Vector3<f64>,
    p_omega_gated: &Matrix3<f64>,
    dt: f64,
    earth: &EarthModel,
) {
    state.q_w = *p_omega_gated;
    if *omega_gated != Vector3::zeros() {
        let omega_nb = body_rate(omega_gated, &state.dcm, &earth.omega_in_n());
        state.dcm = propagate(&state.dcm, &omega_nb, dt);
    }
    let r = state.dcm.matrix();
    state.p += r * state.q_w * r.transpose() * dt;
    symmetrize(&mut state.p);
}

/// Gravity-vector measurement update under the zero-acceleration assumption.
///
/// The residual compares the navigation-frame gravity with the measured
/// body-frame gravity rotated through the current attitude. The Kalman gain
/// is projected orthogonal to gravity before it is applied, so the update
/// can never rotate the solution about the gravity vector.
pub fn measurement_update(
    state: &mut EkfState,
    gravity: &GravityEstimate,
    earth: &EarthModel,
) -> Result<UpdateReport> {
    let g_n = earth.gravity_n();
    let g_unit = g_n / g_n.norm();
    state.q_nu = Matrix3::from_diagonal_element(gravity.var);

    // Sub-threshold-rotation floor on the tilt plane (heading untouched).
    let boost = UPDATE_FLOOR_GAIN * gravity.var / g_n.norm_squared();
    state.p += (Matrix3::identity() - g_unit * g_unit.transpose()) * boost;

    let innovation = g_n - state.dcm.to_nav(&gravity.g_b_hat);
    let h = -skew(&g_n);
    let r_shaped = state.dcm.matrix() * state.q_nu * state.dcm.matrix().transpose();
    let s = h * state.p * h.transpose() + r_shaped;

    let svd = s.svd(false, false);
    let cond = svd.singular_values.max() / svd.singular_values.min().max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::SingularInnovation { cond });
    }
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation { cond })?;

    // Projected gain: heading stays untouched by construction.
    let gain = state.p * h.transpose() * s_inv;
    let gain = (Matrix3::identity() - g_unit * g_unit.transpose()) * gain;

    let correction = gain * innovation;
    state.dcm = Dcm::from_matrix(rotation_exp(&correction) * state.dcm.matrix())
        .expect("correction of an orthonormal attitude stays orthonormal");

    // Joseph form keeps the covariance consistent for the projected
    // (suboptimal) gain.
    let ikh = Matrix3::identity() - gain * h;
    state.p = ikh * state.p * ikh.transpose() + gain * r_shaped * gain.transpose();
    symmetrize(&mut state.p);

    Ok(UpdateReport {
        innovation,
        correction,
    })
}

/// Zero-acceleration detector: the mean linear component must sit within
/// `threshold` of the local gravity magnitude (strict inequality).
pub fn zero_accel_detect(
    pairs: &[SymmetricPairMeasurement],
    g_e: f64,
    threshold: f64,
) -> bool {
    if pairs.is_empty() {
        return false;
    }
    let mean: Vector3<f64> =
        pairs.iter().map(|p| p.f_bar).sum::<Vector3<f64>>() / pairs.len() as f64;
    zero_accel_detect_vec(&mean, g_e, threshold)
}

/// Same detector on an already-averaged linear specific force.
pub fn zero_accel_detect_vec(f_lin: &Vector3<f64>, g_e: f64, threshold: f64) -> bool {
    (f_lin.norm() - g_e).abs() < threshold
}

fn symmetrize(m: &mut Matrix3<f64>) {
    *m = (*m + m.transpose()) * 0.5;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::STANDARD_GRAVITY;
    use crate::transform::decompose;
    use approx::assert_relative_eq;

    fn gravity_exact() -> GravityEstimate {
        GravityEstimate {
            g_b_hat: Vector3::new(0.0, 0.0, STANDARD_GRAVITY),
            var: 1e-6,
        }
    }

    #[test]
    fn gated_epoch_holds_attitude_and_covariance() {
        let mut state = EkfState::new(Dcm::from_euler(0.2, -0.1, 0.7), 1e-4);
        let p0 = state.p;
        let dcm0 = state.dcm;
        predict(
            &mut state,
            &Vector3::zeros(),
            &Matrix3::zeros(),
            0.01,
            &EarthModel::default(),
        );
        assert_eq!(state.p, p0);
        assert_eq!(state.dcm.matrix(), dcm0.matrix());
    }

    #[test]
    fn small_angle_yaw_increment() {
        let mut state = EkfState::new(Dcm::identity(), 1e-4);
        predict(
            &mut state,
            &Vector3::new(0.0, 0.0, 0.1),
            &Matrix3::zeros(),
            0.01,
            &EarthModel::non_rotating(),
        );
        let (_, _, yaw) = state.dcm.euler_angles();
        assert_relative_eq!(yaw, 0.001, epsilon = 1e-12);
    }

    #[test]
    fn covariance_growth_is_linear_with_constant_noise() {
        // Closed form: with Φ = I, P after k steps is k·σ²·dt·I.
        let mut state = EkfState::new(Dcm::identity(), 0.0);
        let sigma_sq = 0.04;
        let q = Matrix3::from_diagonal_element(sigma_sq);
        for _ in 0..100 {
            predict(
                &mut state,
                &Vector3::new(0.3, -0.2, 0.1),
                &q,
                0.01,
                &EarthModel::default(),
            );
        }
        assert_relative_eq!(state.p.trace(), 3.0 * sigma_sq * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_residual_leaves_state_unchanged() {
        let mut state = EkfState::new(Dcm::identity(), 1e-4);
        let before = state.dcm;
        let report = measurement_update(&mut state, &gravity_exact(), &EarthModel::default())
            .unwrap();
        assert_relative_eq!(report.innovation, Vector3::zeros(), epsilon = 1e-12);
        assert!(state.dcm.angle_to(&before) < 1e-12);
    }

    #[test]
    fn roll_error_is_removed_by_exact_gravity_update() {
        // Kalman algebra oracle: with P ≫ Q_ν the gain approaches the
        // pseudo-inverse of H and the tilt error collapses.
        let roll_err = 1.0_f64.to_radians();
        let mut state = EkfState::new(Dcm::from_euler(roll_err, 0.0, 0.0), 0.1);
        let truth = Dcm::identity();
        assert!(state.dcm.angle_to(&truth) > 0.017);
        measurement_update(&mut state, &gravity_exact(), &EarthModel::default()).unwrap();
        let residual_deg = state.dcm.angle_to(&truth).to_degrees();
        assert!(
            residual_deg < 0.01,
            "post-update attitude error {residual_deg:.5}°"
        );
    }

    #[test]
    fn yaw_error_is_invisible_to_gravity() {
        let yaw_err = 10.0_f64.to_radians();
        let mut state = EkfState::new(Dcm::from_euler(0.0, 0.0, yaw_err), 0.1);
        let report =
            measurement_update(&mut state, &gravity_exact(), &EarthModel::default()).unwrap();
        assert_relative_eq!(report.innovation, Vector3::zeros(), epsilon = 1e-12);
        let (_, _, yaw) = state.dcm.euler_angles();
        assert_relative_eq!(yaw, yaw_err, epsilon = 1e-12);
    }

    #[test]
    fn correction_axis_is_orthogonal_to_gravity() {
        let earth = EarthModel::default();
        let g_unit = earth.gravity_n().normalize();
        let mut rng = crate::sim::seeded_rng(9);
        use rand::Rng;
        for _ in 0..100 {
            let dcm_true = Dcm::from_euler(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                (rng.random::<f64>() - 0.5) * 6.0,
            );
            let err = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ) * 0.05;
            let dcm_est = Dcm::from_matrix(rotation_exp(&err) * dcm_true.matrix()).unwrap();
            let mut state = EkfState::new(dcm_est, 0.01);
            // P with cross couplings: the projection, not luck, must keep
            // the correction out of the gravity direction.
            state.p += Matrix3::new(
                0.0, 1e-3, 2e-3, 1e-3, 0.0, -1e-3, 2e-3, -1e-3, 0.0,
            );
            let g_b = dcm_true.to_body(&earth.gravity_n());
            let report = measurement_update(
                &mut state,
                &GravityEstimate {
                    g_b_hat: g_b,
                    var: 1e-6,
                },
                &earth,
            )
            .unwrap();
            if report.correction.norm() > 0.0 {
                let along = report.correction.dot(&g_unit).abs() / report.correction.norm();
                assert!(along < 1e-10, "correction leaks into heading: {along:.3e}");
            }
        }
    }

    #[test]
    fn covariance_stays_psd_under_random_cycles() {
        let mut rng = crate::sim::seeded_rng(17);
        use rand::Rng;
        let earth = EarthModel::default();
        let mut state = EkfState::new(Dcm::identity(), 1e-4);
        for k in 0..5_000 {
            let omega = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let s = rng.random::<f64>() * 1e-4;
            predict(
                &mut state,
                &omega,
                &Matrix3::from_diagonal_element(s),
                0.01,
                &earth,
            );
            if k % 7 == 0 {
                let g_b = state.dcm.to_body(&earth.gravity_n())
                    + Vector3::new(
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                    ) * 0.01;
                let _ = measurement_update(
                    &mut state,
                    &GravityEstimate {
                        g_b_hat: g_b,
                        var: 2.5e-5,
                    },
                    &earth,
                );
            }
            let eig = state.p.symmetric_eigen();
            assert!(
                eig.eigenvalues.min() >= -1e-12,
                "covariance lost positive semidefiniteness at step {k}"
            );
        }
    }

    #[test]
    fn zero_accel_detector_thresholds() {
        let still = decompose(
            &Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
            &Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
            0.01,
            0.01,
        );
        assert!(zero_accel_detect(std::slice::from_ref(&still), STANDARD_GRAVITY, 0.1));

        let moving = decompose(
            &Vector3::new(2.0, 0.0, -STANDARD_GRAVITY),
            &Vector3::new(2.0, 0.0, -STANDARD_GRAVITY),
            0.01,
            0.01,
        );
        assert!(!zero_accel_detect(&[moving], STANDARD_GRAVITY, 0.1));

        // Boundary: a deviation exactly equal to the threshold fails
        // (strict inequality). Power-of-two values keep the arithmetic
        // exact.
        let f = Vector3::new(0.0, 0.0, -1.5);
        assert!(!zero_accel_detect_vec(&f, 1.0, 0.5));
        assert!(zero_accel_detect_vec(&f, 1.0, 0.5000001));
        assert!(!zero_accel_detect(&[], STANDARD_GRAVITY, 0.1));
    }
}
