//! Per-axis significance test on the estimated angular rate.
//!
//! An axis whose rate magnitude does not exceed `α_c` times its standard
//! deviation is treated as resolved to zero: the component is zeroed and so
//! are its covariance row and column, since a resolved value is no longer a
//! random variable. Gating is applied before filter prediction and keeps
//! estimator noise from being integrated into the attitude.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Default confidence coefficient (90% two-sided per axis).
pub const DEFAULT_ALPHA_C: f64 = 1.645;

#[derive(Debug, Clone, Copy)]
pub struct GateConfig {
    pub alpha_c: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            alpha_c: DEFAULT_ALPHA_C,
        }
    }
}

impl GateConfig {
    pub fn new(alpha_c: f64) -> Result<Self> {
        if alpha_c.is_nan() || alpha_c <= 0.0 {
            return Err(Error::Config(format!(
                "confidence coefficient must be positive, got {alpha_c}"
            )));
        }
        Ok(Self { alpha_c })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    /// Per-axis outcome; `true` means the rate is significant and survives.
    pub axis_passed: [bool; 3],
    pub omega_gated: Vector3<f64>,
    pub cov_gated: Matrix3<f64>,
}

/// Compare each rate component against `α_c·σ` (two-sided, so on the
/// magnitude) and zero the failed components together with their covariance
/// rows and columns.
pub fn gate(omega: &Vector3<f64>, p_omega: &Matrix3<f64>, cfg: &GateConfig) -> GateDecision {
    let mut axis_passed = [false; 3];
    let mut omega_gated = *omega;
    let mut cov_gated = *p_omega;
    for i in 0..3 {
        let sigma = p_omega[(i, i)].max(0.0).sqrt();
        if omega[i].abs() <= cfg.alpha_c * sigma {
            omega_gated[i] = 0.0;
            for j in 0..3 {
                cov_gated[(i, j)] = 0.0;
                cov_gated[(j, i)] = 0.0;
            }
        } else {
            axis_passed[i] = true;
        }
    }
    GateDecision {
        axis_passed,
        omega_gated,
        cov_gated,
    }
}

/// Rotation is detected when any axis survives the gate.
pub fn detect_rotation(decision: &GateDecision) -> bool {
    decision.axis_passed.iter().any(|&p| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(s: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal_element(s * s)
    }

    #[test]
    fn gates_small_components_and_zeroes_covariance() {
        let omega = Vector3::new(0.001, 0.5, -0.002);
        let cfg = GateConfig::default();
        let d = gate(&omega, &diag(0.01), &cfg);
        assert_eq!(d.axis_passed, [false, true, false]);
        assert_eq!(d.omega_gated, Vector3::new(0.0, 0.5, 0.0));
        for j in 0..3 {
            assert_eq!(d.cov_gated[(0, j)], 0.0);
            assert_eq!(d.cov_gated[(j, 0)], 0.0);
            assert_eq!(d.cov_gated[(2, j)], 0.0);
            assert_eq!(d.cov_gated[(j, 2)], 0.0);
        }
        assert_eq!(d.cov_gated[(1, 1)], 0.0001);
    }

    #[test]
    fn zero_rate_is_always_gated() {
        let d = gate(&Vector3::zeros(), &diag(0.3), &GateConfig::default());
        assert_eq!(d.axis_passed, [false; 3]);
        assert_eq!(d.omega_gated, Vector3::zeros());
        assert_eq!(d.cov_gated, Matrix3::zeros());
    }

    #[test]
    fn exact_solution_passes_any_nonzero_rate() {
        // Zero variance makes the threshold zero: |0.1| > 0 passes, the
        // zero components do not.
        let d = gate(
            &Vector3::new(0.1, 0.0, 0.0),
            &Matrix3::zeros(),
            &GateConfig::default(),
        );
        assert_eq!(d.axis_passed, [true, false, false]);
        assert_eq!(d.omega_gated, Vector3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn detection_is_any_axis() {
        let mut d = gate(&Vector3::zeros(), &diag(0.1), &GateConfig::default());
        assert!(!detect_rotation(&d));
        d.axis_passed = [false, false, true];
        assert!(detect_rotation(&d));
        d.axis_passed = [true, false, false];
        assert!(detect_rotation(&d));
    }

    #[test]
    fn gate_is_idempotent() {
        let mut rng = crate::sim::seeded_rng(3);
        use rand::Rng;
        let cfg = GateConfig::default();
        for _ in 0..500 {
            let omega = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ) * 0.2;
            let p = diag(0.05 * rng.random::<f64>());
            let once = gate(&omega, &p, &cfg);
            let twice = gate(&once.omega_gated, &once.cov_gated, &cfg);
            assert_eq!(once.omega_gated, twice.omega_gated);
            assert_eq!(once.cov_gated, twice.cov_gated);
        }
    }

    #[test]
    fn zeroed_set_grows_with_alpha() {
        let mut rng = crate::sim::seeded_rng(4);
        use rand::Rng;
        for _ in 0..200 {
            let omega = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let p = diag(0.3);
            let mut previous_zeroed = 0;
            for alpha in [0.5, 1.0, 1.645, 2.5, 4.0] {
                let d = gate(&omega, &p, &GateConfig::new(alpha).unwrap());
                let zeroed = d.axis_passed.iter().filter(|&&a| !a).count();
                assert!(zeroed >= previous_zeroed);
                previous_zeroed = zeroed;
            }
        }
    }

    #[test]
    fn rejects_non_positive_alpha() {
        assert!(GateConfig::new(0.0).is_err());
        assert!(GateConfig::new(-1.0).is_err());
    }
}
