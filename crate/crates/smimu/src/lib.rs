//! Gyro-free attitude and heading estimation from symmetric accelerometer arrays.
//!
//! An IMU array whose lever arms come in mirrored pairs lets the half-sum /
//! half-difference of each pair split every accelerometer frame into a linear
//! component (shared specific force) and a rotational component (centripetal
//! plus tangential acceleration). The rotational components feed a nonlinear
//! least-squares solver for angular velocity and acceleration, a per-axis
//! significance gate suppresses noise-driven propagation, and an error-state
//! Kalman filter fuses gravity observations into the attitude solution.
//!
//! The crate also ships the supporting machinery needed to exercise the
//! estimator end to end: a rigid-body forward model used as the simulation
//! oracle, CSV session ingestion, scoring against ground truth, and the
//! pipeline variants (`single_imu`, `gf_baseline`, `smimu`) the CLI exposes.

pub mod dataset;
pub mod earth;
pub mod ekf;
pub mod error;
pub mod eval;
pub mod gate;
pub mod geometry;
pub mod gf;
pub mod pipeline;
pub mod report;
pub mod sgf;
pub mod sim;
pub mod so3;
pub mod transform;

pub use error::{Error, Result};
