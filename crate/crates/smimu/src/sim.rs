//! Rigid-body forward model: ground-truth trajectories and the per-IMU
//! specific forces they produce.
//!
//! Each accelerometer at lever arm `ρ` measures
//! `f = a_b + ω×(ω×ρ) + ω̇×ρ − g_b`, so a static level body reads
//! `(0, 0, −g)` in the NED body frame. This module is the reference
//! implementation every estimator is tested against.
//!
//! Motion profiles prescribe the body rate relative to the navigation frame;
//! the generator adds the earth rate seen in the body frame so that the
//! emitted `ω_ib` / `ω̇_ib` streams and the attitude stream are mutually
//! consistent. Attitude is stepped with the same one-step integrator used by
//! the estimators, which makes noise-free runs reproduce the truth to
//! machine precision.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use rand_distr::{Distribution, Normal};

use crate::earth::EarthModel;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Axis};
use crate::so3::{propagate, Dcm};

/// Ground-truth state at one epoch.
#[derive(Debug, Clone)]
pub struct TrajectoryEpoch {
    pub t: f64,
    pub dcm_true: Dcm,
    /// Angular velocity of the body with respect to inertial space, body
    /// frame, rad/s.
    pub omega_true: Vector3<f64>,
    /// Angular acceleration, body frame, rad/s².
    pub omega_dot_true: Vector3<f64>,
    /// Linear acceleration of the body center, body frame, m/s².
    pub accel_body_true: Vector3<f64>,
}

/// Specific forces of every array IMU at one epoch, body frame.
#[derive(Debug, Clone)]
pub struct ImuFrameSample {
    pub t: f64,
    pub f_b: Vec<Vector3<f64>>,
}

/// One additive sinusoid on the body rate.
#[derive(Debug, Clone, Copy)]
pub struct SineTerm {
    pub amplitude: Vector3<f64>,
    pub freq_hz: f64,
    pub phase: f64,
}

/// Piecewise segment of body rate and body acceleration.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub duration: f64,
    pub omega_nb: Vector3<f64>,
    pub accel_body: Vector3<f64>,
    /// Linear rate blend from the previous segment over this many seconds
    /// at the segment start; zero applies the rate as a hard step.
    pub ramp_in: f64,
}

impl Segment {
    pub fn new(duration: f64, omega_nb: Vector3<f64>) -> Self {
        Self {
            duration,
            omega_nb,
            accel_body: Vector3::zeros(),
            ramp_in: 0.0,
        }
    }

    pub fn with_accel(mut self, accel_body: Vector3<f64>) -> Self {
        self.accel_body = accel_body;
        self
    }

    pub fn with_ramp(mut self, ramp_in: f64) -> Self {
        self.ramp_in = ramp_in;
        self
    }
}

/// Body-rate profile relative to the navigation frame.
#[derive(Debug, Clone)]
pub enum MotionProfile {
    Static,
    ConstantRate(Vector3<f64>),
    /// `ω_axis(t) = amplitude · sin(2π·freq·t)`.
    Sinusoid {
        axis: Axis,
        amplitude: f64,
        freq_hz: f64,
    },
    /// `ω(t) = base + Σ amplitude·sin(2π·freq·t + phase)`.
    SumOfSines {
        base: Vector3<f64>,
        terms: Vec<SineTerm>,
    },
    Piecewise(Vec<Segment>),
}

impl MotionProfile {
    fn omega_nb(&self, t: f64) -> Vector3<f64> {
        match self {
            MotionProfile::Static => Vector3::zeros(),
            MotionProfile::ConstantRate(w) => *w,
            MotionProfile::Sinusoid {
                axis,
                amplitude,
                freq_hz,
            } => {
                let mut w = Vector3::zeros();
                w[axis.index()] = amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin();
                w
            }
            MotionProfile::SumOfSines { base, terms } => {
                let mut w = *base;
                for term in terms {
                    w += term.amplitude
                        * (2.0 * std::f64::consts::PI * term.freq_hz * t + term.phase).sin();
                }
                w
            }
            MotionProfile::Piecewise(segments) => Self::piecewise_rate(segments, t).0,
        }
    }

    fn omega_nb_dot(&self, t: f64) -> Vector3<f64> {
        match self {
            MotionProfile::Static | MotionProfile::ConstantRate(_) => Vector3::zeros(),
            MotionProfile::Sinusoid {
                axis,
                amplitude,
                freq_hz,
            } => {
                let two_pi_f = 2.0 * std::f64::consts::PI * freq_hz;
                let mut w = Vector3::zeros();
                w[axis.index()] = amplitude * two_pi_f * (two_pi_f * t).cos();
                w
            }
            MotionProfile::SumOfSines { terms, .. } => {
                let mut w = Vector3::zeros();
                for term in terms {
                    let two_pi_f = 2.0 * std::f64::consts::PI * term.freq_hz;
                    w += term.amplitude * two_pi_f * (two_pi_f * t + term.phase).cos();
                }
                w
            }
            MotionProfile::Piecewise(segments) => Self::piecewise_rate(segments, t).1,
        }
    }

    fn accel_body(&self, t: f64) -> Vector3<f64> {
        match self {
            MotionProfile::Piecewise(segments) => {
                segments[Self::segment_index(segments, t).0].accel_body
            }
            _ => Vector3::zeros(),
        }
    }

    fn segment_index(segments: &[Segment], t: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            if t < start + seg.duration {
                return (i, start);
            }
            start += seg.duration;
        }
        (
            segments.len() - 1,
            start - segments.last().expect("validated non-empty").duration,
        )
    }

    /// Rate and its derivative inside a piecewise profile: constant within
    /// a segment, linearly blended from the previous segment during the
    /// segment's ramp-in window.
    fn piecewise_rate(segments: &[Segment], t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (idx, start) = Self::segment_index(segments, t);
        let seg = &segments[idx];
        let elapsed = t - start;
        if idx > 0 && seg.ramp_in > 0.0 && elapsed < seg.ramp_in {
            let prev = segments[idx - 1].omega_nb;
            let slope = (seg.omega_nb - prev) / seg.ramp_in;
            (prev + slope * elapsed, slope)
        } else {
            (seg.omega_nb, Vector3::zeros())
        }
    }

    fn total_duration(&self) -> Option<f64> {
        match self {
            MotionProfile::Piecewise(segments) => {
                Some(segments.iter().map(|s| s.duration).sum())
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MotionProfile::Sinusoid { freq_hz, .. } if freq_hz.is_nan() || *freq_hz <= 0.0 => Err(
                Error::InvalidProfile(format!("sinusoid frequency must be positive, got {freq_hz}")),
            ),
            MotionProfile::Piecewise(segments) if segments.is_empty() => {
                Err(Error::InvalidProfile("piecewise profile has no segments".into()))
            }
            MotionProfile::Piecewise(segments)
                if segments.iter().any(|s| s.duration.is_nan() || s.duration <= 0.0) =>
            {
                Err(Error::InvalidProfile(
                    "piecewise segment durations must be positive".into(),
                ))
            }
            MotionProfile::Piecewise(segments)
                if segments
                    .iter()
                    .any(|s| s.ramp_in < 0.0 || s.ramp_in > s.duration) =>
            {
                Err(Error::InvalidProfile(
                    "segment ramp must be within [0, duration]".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub profile: MotionProfile,
    pub duration: f64,
    pub rate_hz: f64,
    pub initial_attitude: Dcm,
    pub earth: EarthModel,
}

impl TrajectoryConfig {
    pub fn new(profile: MotionProfile, duration: f64, rate_hz: f64) -> Self {
        Self {
            profile,
            duration,
            rate_hz,
            initial_attitude: Dcm::identity(),
            earth: EarthModel::default(),
        }
    }
}

/// Generate a kinematically consistent truth stream at `rate_hz`.
pub fn make_trajectory(cfg: &TrajectoryConfig) -> Result<Vec<TrajectoryEpoch>> {
    if cfg.duration.is_nan() || cfg.duration <= 0.0 {
        return Err(Error::InvalidProfile(format!(
            "duration must be positive, got {}",
            cfg.duration
        )));
    }
    if !(10.0..=1000.0).contains(&cfg.rate_hz) {
        return Err(Error::InvalidProfile(format!(
            "sample rate must be within [10, 1000] Hz, got {}",
            cfg.rate_hz
        )));
    }
    cfg.profile.validate()?;
    if let Some(total) = cfg.profile.total_duration() {
        if cfg.duration > total + 1e-9 {
            return Err(Error::InvalidProfile(format!(
                "piecewise script covers {total} s but {} s were requested",
                cfg.duration
            )));
        }
    }

    let dt = 1.0 / cfg.rate_hz;
    let n = (cfg.duration * cfg.rate_hz).round() as usize;
    let omega_in_n = cfg.earth.omega_in_n();

    let mut epochs = Vec::with_capacity(n);
    let mut dcm = cfg.initial_attitude;
    for k in 0..n {
        let t = k as f64 * dt;
        let omega_nb = cfg.profile.omega_nb(t);
        let omega_in_b = dcm.to_body(&omega_in_n);
        // ω_ib = ω_nb + Rᵀω_in; the derivative of the second term follows
        // from d/dt(Rᵀ) = −[ω_nb×]Rᵀ.
        let omega_ib = omega_nb + omega_in_b;
        let omega_ib_dot = cfg.profile.omega_nb_dot(t) - omega_nb.cross(&omega_in_b);
        epochs.push(TrajectoryEpoch {
            t,
            dcm_true: dcm,
            omega_true: omega_ib,
            omega_dot_true: omega_ib_dot,
            accel_body_true: cfg.profile.accel_body(t),
        });
        dcm = propagate(&dcm, &omega_nb, dt);
    }
    Ok(epochs)
}

/// Deterministic generator for measurement noise.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Specific force of every IMU at one epoch. `noise` adds per-axis white
/// Gaussian noise with each placement's `sigma_f`.
pub fn synth_measurement(
    epoch: &TrajectoryEpoch,
    geometry: &ArrayGeometry,
    noise: Option<&mut ChaCha12Rng>,
) -> ImuFrameSample {
    let g_b = epoch.dcm_true.to_body(&Vector3::new(
        0.0,
        0.0,
        crate::earth::STANDARD_GRAVITY,
    ));
    let mut f_b = Vec::with_capacity(geometry.len());
    for p in geometry.placements() {
        let rotational = epoch.omega_true.cross(&epoch.omega_true.cross(&p.rho))
            + epoch.omega_dot_true.cross(&p.rho);
        f_b.push(epoch.accel_body_true + rotational - g_b);
    }
    if let Some(rng) = noise {
        for (f, p) in f_b.iter_mut().zip(geometry.placements()) {
            let normal = Normal::new(0.0, p.sigma_f).expect("sigma_f validated positive");
            for k in 0..3 {
                f[k] += normal.sample(rng);
            }
        }
    }
    ImuFrameSample { t: epoch.t, f_b }
}

/// Generate the whole measurement session for a trajectory.
pub fn generate_session(
    epochs: &[TrajectoryEpoch],
    geometry: &ArrayGeometry,
    noise_on: bool,
    seed: u64,
) -> Vec<ImuFrameSample> {
    let mut rng = seeded_rng(seed);
    epochs
        .iter()
        .map(|e| synth_measurement(e, geometry, noise_on.then_some(&mut rng)))
        .collect()
}

/// Synthesize a gyro stream for the single-IMU baseline: true `ω_ib` plus
/// white noise of standard deviation `sigma_g`.
pub fn synth_gyro(
    epochs: &[TrajectoryEpoch],
    sigma_g: f64,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let mut rng = seeded_rng(seed);
    epochs
        .iter()
        .map(|e| {
            let mut w = e.omega_true;
            if sigma_g > 0.0 {
                let normal = Normal::new(0.0, sigma_g).expect("non-negative std");
                for k in 0..3 {
                    w[k] += normal.sample(&mut rng);
                }
            }
            w
        })
        .collect()
}

/// Random smooth profile with the rate norm confined to `[floor, ceil]`.
/// Used by simulation suites that need varied but well-conditioned dynamics.
pub fn random_bounded_profile(seed: u64, floor: f64, ceil: f64) -> MotionProfile {
    assert!(floor > 0.0 && ceil > floor);
    let mut rng = seeded_rng(seed);
    let dir = {
        let v = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        v / v.norm()
    };
    // Base magnitude in the middle band, sinusoid amplitudes small enough to
    // stay inside [floor, ceil] for any phase combination.
    let base_mag = floor + (ceil - floor) * (0.45 + 0.2 * rng.random::<f64>());
    let margin = (ceil - base_mag).min(base_mag - floor);
    let mut terms = Vec::new();
    let n_terms = 2 + (rng.random::<u32>() % 2) as usize;
    for _ in 0..n_terms {
        let axis = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        let axis = axis / axis.norm();
        let amp = 0.8 * margin / n_terms as f64 * rng.random::<f64>();
        terms.push(SineTerm {
            amplitude: axis * amp,
            freq_hz: 0.05 + 0.4 * rng.random::<f64>(),
            phase: 2.0 * std::f64::consts::PI * rng.random::<f64>(),
        });
    }
    MotionProfile::SumOfSines {
        base: dir * base_mag,
        terms,
    }
}
