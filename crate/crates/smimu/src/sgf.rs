//! Angular state estimation from the rotational pair components, and gravity
//! estimation from the linear components.
//!
//! Each rotational component obeys `f̆ = ω×(ω×ρ) + ω̇×ρ` for the pair's
//! effective lever arm `ρ`. The solver runs weighted Gauss-Newton on the
//! stacked pair measurements with an analytic Jacobian. The normal matrix is
//! eigen-decomposed every step so directions the geometry cannot observe
//! (for example angular rates near zero, whose Jacobian block vanishes, or
//! out-of-plane angular accelerations of planar arrays) are Tikhonov
//! regularized instead of blowing up the step; their variances come out
//! regularization-dominated and are flagged.
//!
//! Because the centripetal term is quadratic, `ω = 0` is a stationary point
//! of the cost: a warm start resting exactly at zero can never leave it.
//! [`bootstrap_angular`] provides a deterministic restart by solving the
//! stacked system linearly in the quadratic rate monomials `ω_aω_b`, which
//! recovers the rate up to a global sign.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::so3::skew;
use crate::transform::SymmetricPairMeasurement;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;
pub type Jacobian36 = SMatrix<f64, 3, 6>;

/// Tikhonov weight applied to null directions of the normalized normal
/// matrix.
pub const NULL_SPACE_REGULARIZATION: f64 = 1e-8;

/// Relative eigenvalue threshold below which a direction counts as null.
const NULL_SPACE_RTOL: f64 = 1e-12;

/// Condition-number limit of the regularized normal matrix.
const CONDITION_LIMIT: f64 = 1e12;

/// Cap on the Gauss-Newton step norm. On marginal geometries at low SNR an
/// unlucky linearization can otherwise catapult the iterate to enormous
/// rates, where the normal matrix itself blows past the condition limit.
const MAX_STEP_NORM: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Step-norm convergence threshold.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 25,
            tol: 1e-10,
        }
    }
}

/// Angular velocity and acceleration with their joint covariance.
#[derive(Debug, Clone)]
pub struct AngularState {
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    /// 6×6 covariance over `[ω; ω̇]`.
    pub cov: Matrix6,
    /// Reduced chi-square of the weighted residual; 1 when the prior noise
    /// model explains the data.
    pub sigma_v_sq: f64,
    /// Redundancy of the stack: 3·pairs − 6, floored at zero.
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    /// True when `dof == 0`; the covariance then falls back to the prior
    /// measurement noise instead of the (undefined) residual estimate.
    pub exact_determined: bool,
    /// Marks `[ω; ω̇]` components whose variance is regularization-dominated.
    pub unobservable: [bool; 6],
}

impl AngularState {
    /// Angular-velocity block of the covariance.
    pub fn p_omega(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Gravity estimated from the linear pair components under the zero
/// acceleration assumption.
#[derive(Debug, Clone, Copy)]
pub struct GravityEstimate {
    pub g_b_hat: Vector3<f64>,
    /// Per-axis variance of the estimate.
    pub var: f64,
}

/// Mean of the negated linear components; the variance shrinks with the pair
/// count.
pub fn estimate_gravity(pairs: &[SymmetricPairMeasurement]) -> Result<GravityEstimate> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("gravity estimate needs at least one pair"));
    }
    let n = pairs.len() as f64;
    let mut sum = Vector3::zeros();
    let mut var_sum = 0.0;
    for p in pairs {
        sum -= p.f_bar;
        var_sum += p.sigma_bar * p.sigma_bar;
    }
    Ok(GravityEstimate {
        g_b_hat: sum / n,
        var: var_sum / n / n,
    })
}

/// Rotational forward model for one pair: `ω×(ω×ρ) + ω̇×ρ`.
pub fn rotational_model(
    omega: &Vector3<f64>,
    omega_dot: &Vector3<f64>,
    rho: &Vector3<f64>,
) -> Vector3<f64> {
    omega.cross(&omega.cross(rho)) + omega_dot.cross(rho)
}

/// Analytic Jacobian of the rotational model with respect to `[ω; ω̇]`.
///
/// The rate block is `(ω·ρ)I + ωρᵀ − 2ρωᵀ`; the acceleration block is
/// `−[ρ×]` since `ω̇×ρ = −[ρ×]ω̇`. Both match central finite differences of
/// the forward model.
pub fn sgf_jacobian(omega: &Vector3<f64>, rho: &Vector3<f64>) -> Jacobian36 {
    let b = Matrix3::identity() * omega.dot(rho) + omega * rho.transpose()
        - rho * omega.transpose() * 2.0;
    let mut a = Jacobian36::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&b);
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(rho)));
    a
}

struct RegularizedNormal {
    eig_vectors: Matrix6,
    effective: Vector6,
    null_mask: [bool; 6],
}

impl RegularizedNormal {
    fn decompose(normal: &Matrix6) -> Result<Self> {
        let eig = normal.symmetric_eigen();
        let lam_max = eig.eigenvalues.max();
        if lam_max.is_nan() || lam_max <= 0.0 || !lam_max.is_finite() {
            return Err(Error::RankDeficient { cond: f64::INFINITY });
        }
        let mut effective = eig.eigenvalues;
        let mut null_mask = [false; 6];
        for k in 0..6 {
            if effective[k] <= NULL_SPACE_RTOL * lam_max {
                effective[k] = effective[k].max(0.0) + NULL_SPACE_REGULARIZATION;
                null_mask[k] = true;
            }
        }
        let cond = lam_max / effective.min();
        if cond > CONDITION_LIMIT {
            return Err(Error::RankDeficient { cond });
        }
        Ok(Self {
            eig_vectors: eig.eigenvectors,
            effective,
            null_mask,
        })
    }

    fn solve(&self, rhs: &Vector6) -> Vector6 {
        let mut x = Vector6::zeros();
        for k in 0..6 {
            let v = self.eig_vectors.column(k);
            x += v * (v.dot(rhs) / self.effective[k]);
        }
        x
    }

    fn inverse(&self) -> Matrix6 {
        let mut inv = Matrix6::zeros();
        for k in 0..6 {
            let v = self.eig_vectors.column(k);
            inv += v * v.transpose() / self.effective[k];
        }
        inv
    }

    /// Components of the state whose variance is dominated by null
    /// directions rather than data.
    fn unobservable_components(&self) -> [bool; 6] {
        let mut mask = [false; 6];
        for (i, flag) in mask.iter_mut().enumerate() {
            let mut null_weight = 0.0;
            for k in 0..6 {
                if self.null_mask[k] {
                    null_weight += self.eig_vectors[(i, k)].powi(2);
                }
            }
            *flag = null_weight > 0.5;
        }
        mask
    }
}

/// Weighted Gauss-Newton over the stacked rotational components.
///
/// Iterates from `omega_init` (`ω̇` restarts at zero, the model being linear
/// in it) until the step norm drops below `opts.tol`. Non-convergence is not
/// an error: the last iterate is returned with `converged == false`.
///
/// TODO: on minimal planar arrays the weakly constrained in-plane rates fit
/// noise and their ‖ω‖² coupling biases the observable rate magnitude low;
/// a constrained re-solve with insignificant axes pinned to zero would
/// de-bias it.
pub fn solve_angular(
    pairs: &[SymmetricPairMeasurement],
    omega_init: &Vector3<f64>,
    opts: &SolveOptions,
) -> Result<AngularState> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("angular solve needs at least one pair"));
    }
    let dof = (3 * pairs.len()).saturating_sub(6);
    let exact_determined = dof == 0;

    // Normalize the weights so the regularization and condition thresholds
    // act on an O(1) matrix; the Gauss-Newton step and the covariance are
    // invariant to a common weight scale.
    let sigma_ref_sq =
        pairs.iter().map(|p| p.sigma_breve * p.sigma_breve).sum::<f64>() / pairs.len() as f64;
    let weights: Vec<f64> = pairs
        .iter()
        .map(|p| {
            let var = p.sigma_breve * p.sigma_breve;
            if var > 0.0 {
                sigma_ref_sq / var
            } else {
                1.0
            }
        })
        .collect();

    let mut omega = *omega_init;
    let mut omega_dot = Vector3::zeros();
    let mut iterations = 0;
    let mut converged = false;
    let mut normal_final: Option<RegularizedNormal> = None;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let mut normal = Matrix6::zeros();
        let mut gradient = Vector6::zeros();
        for (p, &w) in pairs.iter().zip(&weights) {
            let a = sgf_jacobian(&omega, &p.rho_eff);
            let r = p.f_breve - rotational_model(&omega, &omega_dot, &p.rho_eff);
            normal += a.transpose() * a * w;
            gradient += a.transpose() * r * w;
        }
        let reg = match RegularizedNormal::decompose(&normal) {
            Ok(reg) => reg,
            // Structural singularity at the warm start is an error; a
            // blow-up on a later iterate just means the solve went nowhere.
            Err(e) if iterations == 1 => return Err(e),
            Err(_) => break,
        };
        let mut step = reg.solve(&gradient);
        let step_norm = step.norm();
        if step_norm > MAX_STEP_NORM {
            step *= MAX_STEP_NORM / step_norm;
        }
        omega += step.fixed_rows::<3>(0);
        omega_dot += step.fixed_rows::<3>(3);
        normal_final = Some(reg);
        if step_norm < opts.tol {
            converged = true;
            break;
        }
    }
    let Some(normal_final) = normal_final else {
        return Err(Error::RankDeficient { cond: f64::INFINITY });
    };

    // Weighted residual sum at the solution, in normalized units.
    let mut rss_norm = 0.0;
    for (p, &w) in pairs.iter().zip(&weights) {
        let r = p.f_breve - rotational_model(&omega, &omega_dot, &p.rho_eff);
        rss_norm += r.norm_squared() * w;
    }
    let sigma_v_sq = if exact_determined {
        1.0
    } else {
        rss_norm / sigma_ref_sq / dof as f64
    };
    // cov = σ_v²·(AᵀP⁻¹A)_reg⁻¹; with normalized weights the σ_ref² factors
    // cancel into the expressions below.
    let cov = if exact_determined {
        normal_final.inverse() * sigma_ref_sq
    } else {
        normal_final.inverse() * (rss_norm / dof as f64)
    };

    Ok(AngularState {
        omega,
        omega_dot,
        cov,
        sigma_v_sq,
        dof,
        iterations,
        converged,
        exact_determined,
        unobservable: normal_final.unobservable_components(),
    })
}

/// Deterministic linear re-initialization of the angular solve.
///
/// Rewrites the stacked rotational model in the six quadratic monomials
/// `ω_aω_b` plus `ω̇`, which is linear, solves it by weighted least squares,
/// and factors a rate vector back out of the monomials. The global sign of
/// the rate is not recoverable (the centripetal term is even); callers try
/// both branches. Returns `None` when the stack is too short or carries no
/// rate signal.
pub fn bootstrap_angular(
    pairs: &[SymmetricPairMeasurement],
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    if pairs.len() * 3 < 9 {
        return None;
    }
    let mut normal = SMatrix::<f64, 9, 9>::zeros();
    let mut rhs = SVector::<f64, 9>::zeros();
    for p in pairs {
        let rho = &p.rho_eff;
        // Columns: qxx qyy qzz qxy qxz qyz ω̇x ω̇y ω̇z.
        let mut block = SMatrix::<f64, 3, 9>::zeros();
        block[(0, 1)] = -rho.x;
        block[(0, 2)] = -rho.x;
        block[(0, 3)] = rho.y;
        block[(0, 4)] = rho.z;
        block[(0, 7)] = rho.z;
        block[(0, 8)] = -rho.y;
        block[(1, 0)] = -rho.y;
        block[(1, 2)] = -rho.y;
        block[(1, 3)] = rho.x;
        block[(1, 5)] = rho.z;
        block[(1, 6)] = -rho.z;
        block[(1, 8)] = rho.x;
        block[(2, 0)] = -rho.z;
        block[(2, 1)] = -rho.z;
        block[(2, 4)] = rho.x;
        block[(2, 5)] = rho.y;
        block[(2, 6)] = rho.y;
        block[(2, 7)] = -rho.x;
        let var = p.sigma_breve * p.sigma_breve;
        let w = if var > 0.0 { 1.0 / var } else { 1.0 };
        normal += block.transpose() * block * w;
        rhs += block.transpose() * p.f_breve * w;
    }
    let eig = normal.symmetric_eigen();
    let lam_max = eig.eigenvalues.max();
    if lam_max.is_nan() || lam_max <= 0.0 {
        return None;
    }
    let mut x = SVector::<f64, 9>::zeros();
    for k in 0..9 {
        let lam = eig.eigenvalues[k];
        if lam <= 1e-10 * lam_max {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        x += v * (v.dot(&rhs) / lam);
    }

    let diag = Vector3::new(x[0].max(0.0), x[1].max(0.0), x[2].max(0.0));
    let magnitudes = diag.map(f64::sqrt);
    let dominant = diag.imax();
    if magnitudes[dominant] <= 0.0 {
        return None;
    }
    let cross = |a: usize, b: usize| -> f64 {
        match (a.min(b), a.max(b)) {
            (0, 1) => x[3],
            (0, 2) => x[4],
            (1, 2) => x[5],
            _ => unreachable!(),
        }
    };
    let mut omega = Vector3::zeros();
    omega[dominant] = magnitudes[dominant];
    for i in 0..3 {
        if i == dominant {
            continue;
        }
        let c = cross(dominant, i);
        omega[i] = magnitudes[i] * c.signum();
    }
    Some((omega, Vector3::new(x[6], x[7], x[8])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cube_array, validate_and_pair, ArrayGeometry, SymmetryMode};
    use crate::sim::{synth_measurement, ImuFrameSample, TrajectoryEpoch};
    use crate::so3::Dcm;
    use crate::transform::{decompose, decompose_array};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cube_geometry() -> (ArrayGeometry, crate::geometry::SymmetryPairing) {
        let g = ArrayGeometry::new(cube_array(0.5, 0.012)).unwrap();
        let pairing = validate_and_pair(&g, SymmetryMode::Full3D, 1e-9).unwrap();
        (g, pairing)
    }

    fn cube_pairs(
        omega: Vector3<f64>,
        omega_dot: Vector3<f64>,
    ) -> Vec<SymmetricPairMeasurement> {
        let (g, pairing) = cube_geometry();
        let epoch = TrajectoryEpoch {
            t: 0.0,
            dcm_true: Dcm::identity(),
            omega_true: omega,
            omega_dot_true: omega_dot,
            accel_body_true: Vector3::zeros(),
        };
        let sample = synth_measurement(&epoch, &g, None);
        decompose_array(&sample, &g, &pairing).unwrap()
    }

    fn noisy_cube_pairs(
        omega: Vector3<f64>,
        omega_dot: Vector3<f64>,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> Vec<SymmetricPairMeasurement> {
        let (g, pairing) = cube_geometry();
        let epoch = TrajectoryEpoch {
            t: 0.0,
            dcm_true: Dcm::identity(),
            omega_true: omega,
            omega_dot_true: omega_dot,
            accel_body_true: Vector3::zeros(),
        };
        let mut sample = synth_measurement(&epoch, &g, None);
        let noise = Normal::new(0.0, 0.012).unwrap();
        for f in &mut sample.f_b {
            for k in 0..3 {
                f[k] += noise.sample(rng);
            }
        }
        decompose_array(&sample, &g, &pairing).unwrap()
    }

    #[test]
    fn gravity_from_identical_pairs() {
        let f = Vector3::new(0.0, 0.0, -9.80665);
        let pairs: Vec<_> = (0..4).map(|_| decompose(&f, &f, 0.012, 0.012)).collect();
        let sigma_bar_sq = pairs[0].sigma_bar * pairs[0].sigma_bar;
        let est = estimate_gravity(&pairs).unwrap();
        assert_relative_eq!(est.g_b_hat, Vector3::new(0.0, 0.0, 9.80665), epsilon = 1e-15);
        assert_relative_eq!(est.var, sigma_bar_sq / 4.0, epsilon = 1e-18);
    }

    #[test]
    fn gravity_is_arithmetic_mean() {
        let a = decompose(
            &Vector3::new(0.0, 0.0, -9.8),
            &Vector3::new(0.0, 0.0, -9.8),
            0.01,
            0.01,
        );
        let b = decompose(
            &Vector3::new(0.0, 0.0, -9.9),
            &Vector3::new(0.0, 0.0, -9.9),
            0.01,
            0.01,
        );
        let est = estimate_gravity(&[a, b]).unwrap();
        assert_relative_eq!(est.g_b_hat.z, 9.85, epsilon = 1e-15);
    }

    #[test]
    fn gravity_rejects_empty_input() {
        assert!(matches!(estimate_gravity(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn gravity_variance_monte_carlo() {
        // Oracle: empirical variance of the mean of 4 noisy pairs.
        let sigma_bar = 0.0085;
        let mut rng = crate::sim::seeded_rng(11);
        let noise = Normal::new(0.0, sigma_bar).unwrap();
        let trials = 100_000;
        let mut sum = Vector3::zeros();
        let mut sum_sq = Vector3::zeros();
        for _ in 0..trials {
            let pairs: Vec<_> = (0..4)
                .map(|_| {
                    let f = Vector3::new(
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                        -9.80665 + noise.sample(&mut rng),
                    );
                    let mut m = decompose(&f, &f, 0.012, 0.012);
                    m.sigma_bar = sigma_bar;
                    m
                })
                .collect();
            let est = estimate_gravity(&pairs).unwrap();
            sum += est.g_b_hat;
            sum_sq += est.g_b_hat.component_mul(&est.g_b_hat);
        }
        let mean = sum / trials as f64;
        let expected_var = sigma_bar * sigma_bar / 4.0;
        for k in 0..3 {
            let var = sum_sq[k] / trials as f64 - mean[k] * mean[k];
            assert!(
                (var - expected_var).abs() / expected_var < 0.05,
                "axis {k}: var {var:.3e} vs expected {expected_var:.3e}"
            );
        }
    }

    #[test]
    fn jacobian_at_zero_rate() {
        let a = sgf_jacobian(&Vector3::zeros(), &Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(a.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        // The acceleration block is −[ρ×]: ω̇×ρ = −[ρ×]ω̇, confirmed by the
        // finite-difference check below.
        assert_eq!(
            a.fixed_view::<3, 3>(0, 3).into_owned(),
            -skew(&Vector3::new(0.5, 0.0, 0.0))
        );
    }

    #[test]
    fn jacobian_explicit_entries() {
        let omega = Vector3::new(0.0, 0.0, 1.0);
        let rho = Vector3::new(0.5, 0.0, 0.0);
        let a = sgf_jacobian(&omega, &rho);
        // Rate block entries: (ω·ρ)I + ωρᵀ − 2ρωᵀ.
        assert_relative_eq!(a[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(a[(0, 1)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(a[(0, 2)], -2.0 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(a[(2, 0)], 1.0 * 0.5, epsilon = 1e-15);
    }

    fn finite_difference_jacobian(
        omega: &Vector3<f64>,
        omega_dot: &Vector3<f64>,
        rho: &Vector3<f64>,
    ) -> Jacobian36 {
        let h = 1e-6;
        let mut fd = Jacobian36::zeros();
        for col in 0..6 {
            let mut plus_w = *omega;
            let mut minus_w = *omega;
            let mut plus_wd = *omega_dot;
            let mut minus_wd = *omega_dot;
            if col < 3 {
                plus_w[col] += h;
                minus_w[col] -= h;
            } else {
                plus_wd[col - 3] += h;
                minus_wd[col - 3] -= h;
            }
            let diff = (rotational_model(&plus_w, &plus_wd, rho)
                - rotational_model(&minus_w, &minus_wd, rho))
                / (2.0 * h);
            fd.column_mut(col).copy_from(&diff);
        }
        fd
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = crate::sim::seeded_rng(5);
        for _ in 0..10 {
            let omega = Vector3::new(
                rng.random::<f64>() * 4.0 - 2.0,
                rng.random::<f64>() * 4.0 - 2.0,
                rng.random::<f64>() * 4.0 - 2.0,
            );
            let omega_dot = Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            let rho = Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            let analytic = sgf_jacobian(&omega, &rho);
            let fd = finite_difference_jacobian(&omega, &omega_dot, &rho);
            let scale = analytic.norm().max(1.0);
            assert!(
                (analytic - fd).norm() / scale < 1e-5,
                "jacobian mismatch at ω={omega:?}, ρ={rho:?}"
            );
        }
    }

    #[test]
    fn zero_residual_converges_immediately() {
        let f = Vector3::zeros();
        let pairs: Vec<_> = (0..4)
            .map(|i| {
                let mut m = decompose(&f, &f, 0.012, 0.012);
                m.rho_eff = cube_array(0.5, 0.012)[i].rho;
                m
            })
            .collect();
        let st = solve_angular(&pairs, &Vector3::zeros(), &SolveOptions::default()).unwrap();
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert_eq!(st.omega, Vector3::zeros());
        assert_eq!(st.omega_dot, Vector3::zeros());
    }

    #[test]
    fn recovers_synthetic_motion_from_warm_start() {
        let truth_w = Vector3::new(0.0, 0.0, 1.0);
        let truth_wd = Vector3::new(0.0, 0.0, 2.0);
        let pairs = cube_pairs(truth_w, truth_wd);
        let st = solve_angular(
            &pairs,
            &Vector3::new(0.0, 0.0, 0.9),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(st.converged);
        assert_relative_eq!(st.omega, truth_w, epsilon = 1e-8);
        assert_relative_eq!(st.omega_dot, truth_wd, epsilon = 1e-8);
        assert_eq!(st.dof, 6);
        assert!(st.sigma_v_sq < 1e-16);
    }

    #[test]
    fn recovers_fast_rotation_from_ten_percent_warm_start() {
        let truth_w = Vector3::new(2.0, -3.0, 3.4);
        let truth_wd = Vector3::new(1.5, 0.8, -2.2);
        let pairs = cube_pairs(truth_w, truth_wd);
        let st = solve_angular(&pairs, &(truth_w * 0.9), &SolveOptions::default()).unwrap();
        assert!(st.converged);
        assert!((st.omega - truth_w).norm() < 1e-7);
        assert!((st.omega_dot - truth_wd).norm() < 1e-7);
    }

    #[test]
    fn opposite_warm_start_lands_on_mirror_branch() {
        // The centripetal term is even in ω, so ±ω fit equally well; the
        // warm start selects the branch.
        let pairs = cube_pairs(Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 2.0));
        let st = solve_angular(
            &pairs,
            &Vector3::new(0.0, 0.0, -0.9),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(st.converged);
        assert_relative_eq!(st.omega, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-8);
        assert_relative_eq!(st.omega_dot, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-8);
    }

    #[test]
    fn dof_bookkeeping() {
        for n_pairs in [2usize, 3, 4, 6] {
            let f = Vector3::zeros();
            let pairs: Vec<_> = (0..n_pairs)
                .map(|i| {
                    let mut m = decompose(&f, &f, 0.01, 0.01);
                    let angle = i as f64;
                    m.rho_eff = Vector3::new(angle.cos() * 0.4, angle.sin() * 0.4, 0.1 * i as f64);
                    m
                })
                .collect();
            let st = solve_angular(&pairs, &Vector3::zeros(), &SolveOptions::default()).unwrap();
            let n_imus = 2 * n_pairs;
            assert_eq!(st.dof, (3 * n_imus / 2).saturating_sub(6));
            assert_eq!(st.exact_determined, n_pairs == 2);
        }
    }

    #[test]
    fn static_rates_are_flagged_unobservable() {
        // At ω = 0 the rate block of the Jacobian vanishes: the three rate
        // components must come out regularization-dominated.
        let pairs = cube_pairs(Vector3::zeros(), Vector3::new(0.3, -0.2, 0.5));
        let st = solve_angular(&pairs, &Vector3::zeros(), &SolveOptions::default()).unwrap();
        assert!(st.unobservable[0] && st.unobservable[1] && st.unobservable[2]);
        assert!(!st.unobservable[3] && !st.unobservable[4] && !st.unobservable[5]);
        assert_relative_eq!(st.omega_dot, Vector3::new(0.3, -0.2, 0.5), epsilon = 1e-8);

        // With measurement noise the rate variances must be
        // regularization-dominated (huge), so the gate always zeroes them.
        let mut rng = crate::sim::seeded_rng(31);
        let noisy = noisy_cube_pairs(Vector3::zeros(), Vector3::new(0.3, -0.2, 0.5), &mut rng);
        let st = solve_angular(&noisy, &Vector3::zeros(), &SolveOptions::default()).unwrap();
        for k in 0..3 {
            assert!(
                st.cov[(k, k)] > 1e2,
                "rate variance {:.3e} should be regularization-dominated",
                st.cov[(k, k)]
            );
            assert!(st.cov[(k, k)] > 1e6 * st.cov[(k + 3, k + 3)]);
        }
    }

    #[test]
    fn covariance_is_consistent_monte_carlo() {
        let truth_w = Vector3::new(0.4, -0.3, 0.6);
        let truth_wd = Vector3::new(0.2, 0.1, -0.4);
        let mut rng = crate::sim::seeded_rng(23);
        let trials = 10_000;
        let mut sum = Vector3::zeros();
        let mut sum_sq = Vector3::zeros();
        let mut mean_p = Vector3::zeros();
        let mut chi_sum = 0.0;
        for _ in 0..trials {
            let pairs = noisy_cube_pairs(truth_w, truth_wd, &mut rng);
            let st = solve_angular(&pairs, &truth_w, &SolveOptions::default()).unwrap();
            assert!(st.converged);
            sum += st.omega;
            sum_sq += st.omega.component_mul(&st.omega);
            mean_p += Vector3::new(st.cov[(0, 0)], st.cov[(1, 1)], st.cov[(2, 2)]);
            chi_sum += st.sigma_v_sq;
        }
        let n = trials as f64;
        let mean = sum / n;
        mean_p /= n;
        for k in 0..3 {
            let empirical = sum_sq[k] / n - mean[k] * mean[k];
            let ratio = empirical / mean_p[k];
            assert!(
                (1.0 / 1.5..=1.5).contains(&ratio),
                "axis {k}: empirical {empirical:.3e} vs reported {:.3e} (ratio {ratio:.2})",
                mean_p[k]
            );
        }
        let chi_mean = chi_sum / n;
        assert!(
            (0.8..=1.2).contains(&chi_mean),
            "reduced chi-square mean {chi_mean:.3}"
        );
    }

    #[test]
    fn bootstrap_recovers_rate_up_to_sign() {
        let truth_w = Vector3::new(0.6, -0.4, 0.8);
        let truth_wd = Vector3::new(1.0, 2.0, -0.5);
        let pairs = cube_pairs(truth_w, truth_wd);
        let (w, wd) = bootstrap_angular(&pairs).unwrap();
        let direct = (w - truth_w).norm();
        let mirrored = (w + truth_w).norm();
        assert!(
            direct.min(mirrored) < 1e-6,
            "bootstrap rate {w:?} vs ±{truth_w:?}"
        );
        assert_relative_eq!(wd, truth_wd, epsilon = 1e-6);

        // Either branch is an exact seed for the nonlinear solve.
        let st = solve_angular(&pairs, &w, &SolveOptions::default()).unwrap();
        assert!(st.converged);
        assert_relative_eq!(st.omega_dot, truth_wd, epsilon = 1e-8);
        assert!(
            (st.omega - truth_w).norm() < 1e-8 || (st.omega + truth_w).norm() < 1e-8
        );
    }

    #[test]
    fn bootstrap_needs_enough_pairs() {
        let pairs = cube_pairs(Vector3::new(0.2, 0.0, 0.4), Vector3::zeros());
        assert!(bootstrap_angular(&pairs[..2]).is_none());
    }

    #[test]
    fn stuck_at_zero_without_bootstrap() {
        // Cost gradient along ω vanishes identically at ω = 0: plain
        // Gauss-Newton from a zero warm start cannot detect the spin, while
        // the bootstrap seed can.
        let truth_w = Vector3::new(0.0, 0.0, 0.8);
        let pairs = cube_pairs(truth_w, Vector3::zeros());
        let stuck = solve_angular(&pairs, &Vector3::zeros(), &SolveOptions::default()).unwrap();
        assert_eq!(stuck.omega, Vector3::zeros());
        assert!(stuck.sigma_v_sq > 100.0, "unmodeled spin must inflate the residual");

        let (seed, _) = bootstrap_angular(&pairs).unwrap();
        let st = solve_angular(&pairs, &seed, &SolveOptions::default()).unwrap();
        assert!(st.converged);
        assert!((st.omega - truth_w).norm() < 1e-8 || (st.omega + truth_w).norm() < 1e-8);
        assert!(st.sigma_v_sq < 1e-12);
    }

    #[test]
    fn planar_square_resolves_all_components() {
        // Two non-collinear planar pairs see the in-plane angular
        // accelerations through separate equations: exactly determined.
        let g = ArrayGeometry::new(crate::geometry::planar_square_array(0.5, 0.0, 0.012)).unwrap();
        let pairing = validate_and_pair(
            &g,
            SymmetryMode::Planar2D(crate::geometry::Axis::Z),
            1e-9,
        )
        .unwrap();
        let truth_w = Vector3::new(0.5, 0.3, 0.8);
        let truth_wd = Vector3::new(0.1, -0.2, 0.4);
        let epoch = TrajectoryEpoch {
            t: 0.0,
            dcm_true: Dcm::identity(),
            omega_true: truth_w,
            omega_dot_true: truth_wd,
            accel_body_true: Vector3::zeros(),
        };
        let sample = synth_measurement(&epoch, &g, None);
        let pairs = decompose_array(&sample, &g, &pairing).unwrap();
        let st = solve_angular(&pairs, &(truth_w * 0.95), &SolveOptions::default()).unwrap();
        assert!(st.converged);
        assert!(st.exact_determined);
        assert_relative_eq!(st.omega, truth_w, epsilon = 1e-7);
        assert_relative_eq!(st.omega_dot, truth_wd, epsilon = 1e-7);
    }

    #[test]
    fn single_planar_pair_is_regularized_not_fatal() {
        let f_breve = Vector3::new(0.01, -0.02, 0.005);
        let mut m = decompose(&(f_breve * 2.0), &Vector3::zeros(), 0.01, 0.01);
        m.rho_eff = Vector3::new(0.3, 0.1, 0.0);
        m.planar = true;
        let st = solve_angular(&[m], &Vector3::zeros(), &SolveOptions::default()).unwrap();
        assert!(st.unobservable.iter().any(|&u| u));
    }

    #[test]
    fn broadcast_sample_shape_guard() {
        let (g, pairing) = cube_geometry();
        let bad = ImuFrameSample {
            t: 0.0,
            f_b: vec![Vector3::zeros(); 3],
        };
        assert!(decompose_array(&bad, &g, &pairing).is_err());
    }
}
