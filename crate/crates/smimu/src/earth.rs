//! Navigation-frame constants and the fixed-latitude earth model.
//!
//! The navigation frame is NED with gravity positive down. Position and
//! velocity are not tracked, so the earth rate is evaluated at a configured
//! fixed latitude and the transport rate is zero.

use nalgebra::Vector3;

/// Earth rotation rate, rad/s.
pub const EARTH_RATE: f64 = 7.292_115e-5;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.806_65;

/// Default latitude used when none is configured, degrees.
pub const DEFAULT_LATITUDE_DEG: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel {
    /// Latitude at which the earth rate is evaluated, rad.
    pub latitude: f64,
    /// Gravity magnitude, m/s².
    pub gravity: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self::from_latitude_deg(DEFAULT_LATITUDE_DEG)
    }
}

impl EarthModel {
    pub fn from_latitude_deg(latitude_deg: f64) -> Self {
        Self {
            latitude: latitude_deg.to_radians(),
            gravity: STANDARD_GRAVITY,
        }
    }

    /// Earth model with zero rotation rate; handy for isolated unit tests.
    pub fn non_rotating() -> Self {
        Self {
            latitude: f64::NAN,
            gravity: STANDARD_GRAVITY,
        }
    }

    /// Rotation rate of the navigation frame with respect to inertial space,
    /// expressed in NED. The transport rate is zero by construction.
    pub fn omega_in_n(&self) -> Vector3<f64> {
        if self.latitude.is_nan() {
            return Vector3::zeros();
        }
        Vector3::new(
            EARTH_RATE * self.latitude.cos(),
            0.0,
            -EARTH_RATE * self.latitude.sin(),
        )
    }

    /// Gravity vector in NED (down positive), m/s².
    pub fn gravity_n(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.gravity)
    }
}
