//! Rotation representation, skew operators, and attitude propagation.
//!
//! Attitude is carried as a body-to-navigation direction cosine matrix. The
//! continuous kinematics `Ṙ = R·[ω_nb×]` are integrated per step with the
//! closed-form matrix exponential (Rodrigues formula) and the result is
//! re-orthonormalized through symmetric orthogonalization, which bounds the
//! drift from finite precision over long runs.

use nalgebra::{Matrix3, Vector3};

use crate::earth::EarthModel;
use crate::error::{Error, Result};

/// Default saturation bound on body rates, rad/s.
pub const BODY_RATE_SATURATION: f64 = 50.0;

/// Cross-product matrix: `skew(v) * u == v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Closed-form `exp([phi×])` via the Rodrigues formula.
pub fn rotation_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    if angle < 1e-12 {
        // Second-order series; exact to machine precision below the cutoff.
        let k = skew(phi);
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let axis = phi / angle;
    let k = skew(&axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Rotation vector of an orthonormal matrix (inverse of [`rotation_exp`]).
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_angle = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    let off = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if angle < 1e-9 {
        return off * 0.5;
    }
    if angle > std::f64::consts::PI - 1e-6 {
        // Near π the off-diagonal form degenerates; recover the axis from the
        // dominant diagonal entry of (R + I)/2.
        let m = (r + Matrix3::identity()) * 0.5;
        let mut axis = Vector3::new(m[(0, 0)].sqrt(), m[(1, 1)].sqrt(), m[(2, 2)].sqrt());
        let k = axis.imax();
        for i in 0..3 {
            if i != k && m[(k, i)] < 0.0 {
                axis[i] = -axis[i];
            }
        }
        if off[k] < 0.0 {
            axis = -axis;
        }
        return axis.normalize() * angle;
    }
    off * (angle / (2.0 * angle.sin()))
}

/// Body-to-navigation direction cosine matrix, kept orthonormal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm {
    m: Matrix3<f64>,
}

impl Default for Dcm {
    fn default() -> Self {
        Self::identity()
    }
}

impl Dcm {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Wraps a matrix that is expected to be orthonormal already. Fails when
    /// the input is further than `1e-6` from the orthogonal group or is a
    /// reflection; small defects are removed by re-orthonormalization.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = (m.transpose() * m - Matrix3::identity()).norm();
        if !defect.is_finite() || defect > 1e-6 {
            return Err(Error::Config(format!(
                "matrix is not orthonormal (defect {defect:.3e})"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(Error::Config("matrix is a reflection".into()));
        }
        let mut dcm = Self { m };
        dcm.renormalize();
        Ok(dcm)
    }

    /// Body-to-navigation rotation from roll, pitch, yaw (radians), applied
    /// in yaw-pitch-roll order.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let m = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
        Self { m }
    }

    pub fn from_euler_deg(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_euler(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Rotate a body-frame vector into the navigation frame.
    pub fn to_nav(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Rotate a navigation-frame vector into the body frame.
    pub fn to_body(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m.transpose() * v
    }

    /// Roll, pitch, yaw in radians.
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        let m = &self.m;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        (roll, pitch, yaw)
    }

    /// Roll, pitch, yaw in degrees.
    pub fn euler_deg(&self) -> Vector3<f64> {
        let (r, p, y) = self.euler_angles();
        Vector3::new(r.to_degrees(), p.to_degrees(), y.to_degrees())
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix3::identity()).norm()
    }

    /// Total rotation angle separating two attitudes, rad.
    pub fn angle_to(&self, other: &Dcm) -> f64 {
        rotation_log(&(self.m * other.m.transpose())).norm()
    }

    /// Symmetric orthogonalization: replaces the matrix with the nearest
    /// orthonormal one, `R(ated RᵀR)^{-1/2}`.
    fn renormalize(&mut self) {
        let gram = self.m.transpose() * self.m;
        let eig = gram.symmetric_eigen();
        let mut inv_sqrt = Matrix3::zeros();
        for i in 0..3 {
            inv_sqrt[(i, i)] = 1.0 / eig.eigenvalues[i].max(1e-30).sqrt();
        }
        self.m *= eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    }
}

/// Angular rate of the body with respect to the navigation frame, validated
/// against the saturation bound before it is allowed into propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyRate {
    omega_nb_b: Vector3<f64>,
}

impl BodyRate {
    pub fn new(omega_nb_b: Vector3<f64>) -> Result<Self> {
        Self::with_limit(omega_nb_b, BODY_RATE_SATURATION)
    }

    pub fn with_limit(omega_nb_b: Vector3<f64>, limit: f64) -> Result<Self> {
        let magnitude = omega_nb_b.norm();
        if !magnitude.is_finite() || magnitude > limit {
            return Err(Error::BodyRateSaturation { magnitude, limit });
        }
        Ok(Self { omega_nb_b })
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.omega_nb_b
    }
}

/// Body rate with respect to the navigation frame:
/// `ω_nb = ω_ib − Rᵀ·ω_in`.
pub fn body_rate(
    omega_ib_b: &Vector3<f64>,
    dcm: &Dcm,
    omega_in_n: &Vector3<f64>,
) -> Vector3<f64> {
    omega_ib_b - dcm.to_body(omega_in_n)
}

/// Convenience wrapper evaluating the earth rate from the model.
pub fn body_rate_earth(omega_ib_b: &Vector3<f64>, dcm: &Dcm, earth: &EarthModel) -> Vector3<f64> {
    body_rate(omega_ib_b, dcm, &earth.omega_in_n())
}

/// One attitude integration step: `R · exp([ω_nb·dt×])`, re-orthonormalized.
pub fn propagate(dcm: &Dcm, omega_nb_b: &Vector3<f64>, dt: f64) -> Dcm {
    debug_assert!(dt > 0.0, "propagation step must be positive");
    let mut next = Dcm {
        m: dcm.m * rotation_exp(&(omega_nb_b * dt)),
    };
    next.renormalize();
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rot_z(angle: f64) -> Dcm {
        Dcm::from_euler(0.0, 0.0, angle)
    }

    #[test]
    fn skew_unit_x() {
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(s, expected);
    }

    #[test]
    fn skew_zero() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_annihilates_own_vector() {
        let v = Vector3::new(0.3, -1.2, 2.0);
        assert_eq!(skew(&v) * v, Vector3::zeros());
    }

    #[test]
    fn skew_matches_cross_product() {
        let v = Vector3::new(0.4, -0.7, 1.1);
        let u = Vector3::new(-2.0, 0.5, 0.25);
        assert_relative_eq!(skew(&v) * u, v.cross(&u), epsilon = 1e-15);
    }

    #[test]
    fn skew_is_antisymmetric() {
        let s = skew(&Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(s.transpose(), -s);
    }

    #[test]
    fn body_rate_zero_inputs() {
        let w = body_rate(&Vector3::zeros(), &Dcm::identity(), &Vector3::zeros());
        assert_eq!(w, Vector3::zeros());
    }

    #[test]
    fn body_rate_subtracts_earth_rate_at_identity() {
        let w = body_rate(
            &Vector3::new(0.0, 0.0, 1e-3),
            &Dcm::identity(),
            &Vector3::new(0.0, 0.0, 7.292115e-5),
        );
        assert_relative_eq!(w.z, 9.2707885e-4, epsilon = 1e-12);
        assert_eq!(w.x, 0.0);
        assert_eq!(w.y, 0.0);
    }

    #[test]
    fn body_rate_rotated_frame() {
        // Oracle: explicit matrix-vector product with R = rot_z(90°).
        let dcm = rot_z(FRAC_PI_2);
        let omega_in = Vector3::new(7.3e-5, 0.0, 0.0);
        let expected = Vector3::new(0.1, 0.0, 0.0) - dcm.matrix().transpose() * omega_in;
        let w = body_rate(&Vector3::new(0.1, 0.0, 0.0), &dcm, &omega_in);
        assert_relative_eq!(w, expected, epsilon = 1e-15);
        assert_relative_eq!(w.x, 0.1, epsilon = 1e-12);
        assert_relative_eq!(w.y, 7.3e-5, epsilon = 1e-12);
        assert_relative_eq!(w.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn propagate_quarter_turn() {
        let next = propagate(&Dcm::identity(), &Vector3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*next.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn propagate_zero_rate_is_identity_map() {
        let dcm = Dcm::from_euler(0.3, -0.2, 1.4);
        let next = propagate(&dcm, &Vector3::zeros(), 1.0);
        assert_relative_eq!(*next.matrix(), *dcm.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn propagate_half_steps_compose() {
        let dcm = Dcm::from_euler(0.1, 0.5, -0.8);
        let omega = Vector3::new(0.4, -0.2, 0.9);
        let full = propagate(&dcm, &omega, 0.02);
        let halves = propagate(&propagate(&dcm, &omega, 0.01), &omega, 0.01);
        assert_relative_eq!(*full.matrix(), *halves.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn propagate_reversibility() {
        let dcm = Dcm::from_euler(-0.4, 0.25, 2.0);
        let omega = Vector3::new(1.3, -0.6, 0.2);
        let forward = propagate(&dcm, &omega, 0.05);
        let back = propagate(&forward, &(-omega), 0.05);
        assert!(dcm.angle_to(&back) < 1e-10);
    }

    #[test]
    fn rotation_log_inverts_exp() {
        for phi in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(1.5, 0.4, -2.0),
            Vector3::new(1e-10, 0.0, 2e-10),
            Vector3::new(0.0, PI - 1e-4, 0.0),
        ] {
            let recovered = rotation_log(&rotation_exp(&phi));
            assert_relative_eq!(recovered, phi, epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn euler_round_trip() {
        let dcm = Dcm::from_euler(0.31, -0.55, 2.1);
        let (r, p, y) = dcm.euler_angles();
        assert_relative_eq!(r, 0.31, epsilon = 1e-12);
        assert_relative_eq!(p, -0.55, epsilon = 1e-12);
        assert_relative_eq!(y, 2.1, epsilon = 1e-12);
    }

    #[test]
    fn renormalization_bounds_defect() {
        let mut dcm = Dcm::identity();
        let omega = Vector3::new(0.7, -0.3, 0.5);
        for _ in 0..20_000 {
            dcm = propagate(&dcm, &omega, 0.01);
        }
        assert!(dcm.orthonormality_defect() < 1e-12);
        assert!((dcm.matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn body_rate_saturation_enforced() {
        assert!(BodyRate::new(Vector3::new(49.0, 0.0, 0.0)).is_ok());
        assert!(matches!(
            BodyRate::new(Vector3::new(51.0, 0.0, 0.0)),
            Err(Error::BodyRateSaturation { .. })
        ));
        assert!(BodyRate::new(Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
    }
}
