//! Two-body orbit model: elements, state vectors, propagation and Earth occultation.
//!
//! Frame convention is Earth-centred inertial with +x toward the vernal equinox
//! and +z along the spin axis. Earth is a spherical point mass.

mod kepler;
mod tle;
mod visibility;

pub use kepler::{elements_to_state, propagate, solve_kepler, KEPLER_MAX_ITER, KEPLER_TOL};
pub use tle::{format_tle, parse_tle, tle_checksum, Tle, TleError, TleLine};
pub use visibility::{angle_condition, line_of_sight, segment_clearance};

use thiserror::Error;

use crate::scalar::{Real, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("Kepler equation did not converge for mean anomaly {mean_anomaly}")]
    NoConvergence { mean_anomaly: f64 },
    #[error("state is not on a bound orbit (specific energy {energy} >= 0)")]
    Unbound { energy: f64 },
    #[error("states have different timestamps ({a} s vs {b} s)")]
    TimestampMismatch { a: f64, b: f64 },
    #[error("invalid orbital elements: {0}")]
    InvalidElements(String),
}

/// Gravitational parameter and radius of a spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel<T> {
    pub mu_km3_s2: T,
    pub earth_radius_km: T,
}

impl<T: Real> EarthModel<T> {
    pub const DEFAULT_MU_KM3_S2: f64 = 398_600.441_8;
    pub const DEFAULT_RADIUS_KM: f64 = 6371.0;

    pub fn new(mu_km3_s2: T, earth_radius_km: T) -> Result<Self, OrbitError> {
        if !(mu_km3_s2 > T::zero()) || !(earth_radius_km > T::zero()) {
            return Err(OrbitError::InvalidElements(
                "earth model constants must be positive".into(),
            ));
        }
        Ok(Self {
            mu_km3_s2,
            earth_radius_km,
        })
    }

    /// Orbital period of a bound orbit with semi-major axis `a`.
    pub fn period_s(&self, semi_major_axis_km: T) -> T {
        T::TAU() * (semi_major_axis_km.powi(3) / self.mu_km3_s2).sqrt()
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self, semi_major_axis_km: T) -> T {
        (self.mu_km3_s2 / semi_major_axis_km.powi(3)).sqrt()
    }
}

impl<T: Real> Default for EarthModel<T> {
    fn default() -> Self {
        Self {
            mu_km3_s2: T::lit(Self::DEFAULT_MU_KM3_S2),
            earth_radius_km: T::lit(Self::DEFAULT_RADIUS_KM),
        }
    }
}

/// Classical elements at `epoch_s` (seconds since scenario start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerianElements<T> {
    pub semi_major_axis_km: T,
    pub eccentricity: T,
    pub inclination_rad: T,
    pub raan_rad: T,
    pub arg_perigee_rad: T,
    pub mean_anomaly_rad: T,
    pub epoch_s: T,
}

/// Wraps an angle into [0, 2π).
pub fn normalize_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let r = a % tau;
    let r = if r < T::zero() { r + tau } else { r };
    // `r + tau` can round up to exactly tau for tiny negative inputs.
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

impl<T: Real> KeplerianElements<T> {
    /// Validates the element invariants against `earth` and normalizes angles.
    pub fn new(
        semi_major_axis_km: T,
        eccentricity: T,
        inclination_rad: T,
        raan_rad: T,
        arg_perigee_rad: T,
        mean_anomaly_rad: T,
        epoch_s: T,
        earth: &EarthModel<T>,
    ) -> Result<Self, OrbitError> {
        let el = Self {
            semi_major_axis_km,
            eccentricity,
            inclination_rad: normalize_angle(inclination_rad),
            raan_rad: normalize_angle(raan_rad),
            arg_perigee_rad: normalize_angle(arg_perigee_rad),
            mean_anomaly_rad: normalize_angle(mean_anomaly_rad),
            epoch_s,
        };
        el.validate(earth)?;
        Ok(el)
    }

    pub fn validate(&self, earth: &EarthModel<T>) -> Result<(), OrbitError> {
        if !(self.semi_major_axis_km > earth.earth_radius_km) {
            return Err(OrbitError::InvalidElements(format!(
                "semi-major axis {} km is not above the Earth radius",
                self.semi_major_axis_km
            )));
        }
        if !(self.eccentricity >= T::zero() && self.eccentricity < T::one()) {
            return Err(OrbitError::InvalidElements(format!(
                "eccentricity {} outside [0, 1)",
                self.eccentricity
            )));
        }
        if !self.epoch_s.is_finite() {
            return Err(OrbitError::InvalidElements("epoch is not finite".into()));
        }
        Ok(())
    }

    /// Argument of latitude at epoch using the mean anomaly (exact for circular orbits).
    pub fn mean_argument_of_latitude(&self) -> T {
        normalize_angle(self.arg_perigee_rad + self.mean_anomaly_rad)
    }
}

/// Position and velocity in the inertial frame at `t_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector<T> {
    pub position_km: Vec3<T>,
    pub velocity_km_s: Vec3<T>,
    pub t_s: T,
}

impl<T: Real> StateVector<T> {
    pub fn radius_km(&self) -> T {
        self.position_km.norm()
    }

    pub fn speed_km_s(&self) -> T {
        self.velocity_km_s.norm()
    }

    /// Specific orbital energy v²/2 − μ/r.
    pub fn specific_energy(&self, earth: &EarthModel<T>) -> T {
        let v = self.speed_km_s();
        v * v / T::lit(2.0) - earth.mu_km3_s2 / self.radius_km()
    }

    /// Specific angular momentum r × v.
    pub fn angular_momentum(&self) -> Vec3<T> {
        self.position_km.cross(self.velocity_km_s)
    }

    /// Geocentric latitude in degrees (equal to geodetic on a spherical Earth).
    pub fn latitude_deg(&self) -> T {
        (self.position_km.z / self.radius_km()).asin().to_degrees()
    }
}
