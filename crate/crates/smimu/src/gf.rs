//! Joint gyro-free least squares: solve for angular acceleration and the
//! shared linear specific force in one stacked system, then dead-reckon the
//! rate and attitude by integration.
//!
//! This is the conventional accelerometer-array mechanization the symmetric
//! decomposition improves on. The centripetal terms are moved to the right
//! hand side using the current rate estimate, the remaining model is linear,
//! and the rate is advanced by trapezoidal integration of the estimated
//! angular acceleration. Noise therefore double-integrates into attitude.

use nalgebra::{DVector, SMatrix, Vector3};

use crate::earth::EarthModel;
use crate::error::{Error, Result};
use crate::geometry::{design_matrix, ArrayGeometry};
use crate::sim::ImuFrameSample;
use crate::so3::{body_rate, propagate, Dcm};

pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Joint estimate of angular acceleration and linear specific force.
#[derive(Debug, Clone)]
pub struct GfJointState {
    /// Angular acceleration, rad/s².
    pub omega_dot: Vector3<f64>,
    /// Shared linear part `a_b − g_b`, m/s².
    pub lin: Vector3<f64>,
    /// 6×6 covariance over `[ω̇; a−g]` from the residual variance.
    pub cov: Matrix6,
    /// Residual degrees of freedom, `3N − 6`.
    pub dof: usize,
}

/// Solve the stacked linear system for one frame sample.
///
/// Requires at least six IMUs and a well-conditioned normal matrix. The
/// centripetal contribution of each IMU is computed from `omega_current`.
pub fn solve_joint(
    sample: &ImuFrameSample,
    geometry: &ArrayGeometry,
    omega_current: &Vector3<f64>,
) -> Result<GfJointState> {
    let n = geometry.len();
    if n < 6 {
        return Err(Error::TooFewImus(n));
    }
    if sample.f_b.len() != n {
        return Err(Error::Config(format!(
            "frame sample has {} vectors but the array has {n} IMUs",
            sample.f_b.len()
        )));
    }
    let design = design_matrix(geometry);
    if !design.cond.is_finite() || design.cond > 1e12 {
        return Err(Error::SingularNormalMatrix { cond: design.cond });
    }

    let mut rhs = DVector::zeros(3 * n);
    for (i, p) in geometry.placements().iter().enumerate() {
        let centripetal = omega_current.cross(&omega_current.cross(&p.rho));
        let y = sample.f_b[i] - centripetal;
        for k in 0..3 {
            rhs[3 * i + k] = y[k];
        }
    }

    let normal = design.h.transpose() * &design.h;
    let ht_y = design.h.transpose() * &rhs;
    let chol = normal
        .clone()
        .cholesky()
        .ok_or(Error::SingularNormalMatrix { cond: design.cond })?;
    let x = chol.solve(&ht_y);

    let residual = &rhs - &design.h * &x;
    let dof = 3 * n - 6;
    let sigma_sq = residual.norm_squared() / dof as f64;
    let normal_inv = chol.inverse();
    let mut cov = Matrix6::zeros();
    for r in 0..6 {
        for c in 0..6 {
            cov[(r, c)] = sigma_sq * normal_inv[(r, c)];
        }
    }

    Ok(GfJointState {
        omega_dot: Vector3::new(x[0], x[1], x[2]),
        lin: Vector3::new(x[3], x[4], x[5]),
        cov,
        dof,
    })
}

/// Output of one mechanization step.
#[derive(Debug, Clone)]
pub struct GfEpoch {
    pub t: f64,
    pub dcm: Dcm,
    /// Integrated angular rate, rad/s.
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub lin: Vector3<f64>,
    pub cov: Matrix6,
}

/// Dead-reckoning chain: per epoch solve, integrate the rate, propagate the
/// attitude. Holds the per-run state (attitude, rate, previous angular
/// acceleration for the trapezoid rule).
#[derive(Debug, Clone)]
pub struct GfMechanization {
    dcm: Dcm,
    omega: Vector3<f64>,
    prev_omega_dot: Option<Vector3<f64>>,
    earth: EarthModel,
    /// Accumulated per-axis rate variance from the integrated angular
    /// acceleration noise; drives the attitude process noise downstream.
    omega_var: Vector3<f64>,
}

impl GfMechanization {
    pub fn new(initial_dcm: Dcm, initial_omega: Vector3<f64>, earth: EarthModel) -> Self {
        Self {
            dcm: initial_dcm,
            omega: initial_omega,
            prev_omega_dot: None,
            earth,
            omega_var: Vector3::zeros(),
        }
    }

    pub fn dcm(&self) -> &Dcm {
        &self.dcm
    }

    pub fn omega(&self) -> &Vector3<f64> {
        &self.omega
    }

    /// Accumulated variance of the integrated rate, rad²/s².
    pub fn omega_variance(&self) -> &Vector3<f64> {
        &self.omega_var
    }

    /// Allows the owning filter to re-point the attitude after corrections.
    pub fn set_dcm(&mut self, dcm: Dcm) {
        self.dcm = dcm;
    }

    /// Solve the joint system at the current epoch without advancing the
    /// state. The rate entering the epoch is the Euler prediction from the
    /// previous angular acceleration; it is refined to the trapezoid
    /// ω + dt·(ω̇_prev + ω̇)/2 and the solve repeated once.
    pub fn solve_epoch(
        &mut self,
        sample: &ImuFrameSample,
        geometry: &ArrayGeometry,
        dt: f64,
    ) -> Result<GfEpoch> {
        let sol = solve_joint(sample, geometry, &self.omega)?;
        if let Some(prev) = self.prev_omega_dot {
            self.omega += (sol.omega_dot - prev) * (0.5 * dt);
        }
        let sol = solve_joint(sample, geometry, &self.omega)?;
        Ok(GfEpoch {
            t: sample.t,
            dcm: self.dcm,
            omega: self.omega,
            omega_dot: sol.omega_dot,
            lin: sol.lin,
            cov: sol.cov,
        })
    }

    /// Advance attitude and rate to the next epoch with the solved angular
    /// acceleration.
    pub fn advance(&mut self, epoch: &GfEpoch, dt: f64) {
        let omega_nb = body_rate(&self.omega, &self.dcm, &self.earth.omega_in_n());
        self.dcm = propagate(&self.dcm, &omega_nb, dt);
        self.omega += epoch.omega_dot * dt;
        self.prev_omega_dot = Some(epoch.omega_dot);
        for k in 0..3 {
            self.omega_var[k] += epoch.cov[(k, k)] * dt * dt;
        }
    }

    /// Consume one frame sample: solve, then step attitude and rate.
    pub fn step(
        &mut self,
        sample: &ImuFrameSample,
        geometry: &ArrayGeometry,
        dt: f64,
    ) -> Result<GfEpoch> {
        let epoch = self.solve_epoch(sample, geometry, dt)?;
        self.advance(&epoch, dt);
        Ok(epoch)
    }
}

/// Run the mechanization over a whole sample stream.
pub fn run_gf_mechanization(
    samples: &[ImuFrameSample],
    geometry: &ArrayGeometry,
    initial_dcm: Dcm,
    initial_omega: Vector3<f64>,
    earth: EarthModel,
    dt: f64,
) -> Result<Vec<GfEpoch>> {
    let mut mech = GfMechanization::new(initial_dcm, initial_omega, earth);
    samples
        .iter()
        .map(|s| mech.step(s, geometry, dt))
        .collect()
}

/// Final attitude of the mechanization after consuming the whole stream.
pub fn final_attitude(
    samples: &[ImuFrameSample],
    geometry: &ArrayGeometry,
    initial_dcm: Dcm,
    initial_omega: Vector3<f64>,
    earth: EarthModel,
    dt: f64,
) -> Result<Dcm> {
    let mut mech = GfMechanization::new(initial_dcm, initial_omega, earth);
    for s in samples {
        mech.step(s, geometry, dt)?;
    }
    Ok(*mech.dcm())
}
