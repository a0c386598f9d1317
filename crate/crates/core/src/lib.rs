//! Flow-level traffic measurement for LEO satellite networks.
//!
//! Orbits and link topology are predicted on the ground; each satellite gets a
//! seed that maps its expected flows onto distinct counters.

pub mod baselines;
pub mod flows;
pub mod metrics;
pub mod orbit;
pub mod scalar;
pub mod seeds;
pub mod sim;
pub mod sketch;
pub mod topology;
pub mod traffic;

pub type EarthModel = orbit::EarthModel<f64>;
pub type KeplerianElements = orbit::KeplerianElements<f64>;
pub type StateVector = orbit::StateVector<f64>;
pub type StateVectorF32 = orbit::StateVector<f32>;
pub type Vec3 = scalar::Vec3<f64>;
pub type MetricSet = metrics::MetricSet<f64>;
