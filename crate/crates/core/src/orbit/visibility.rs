use super::{EarthModel, OrbitError, StateVector};
use crate::scalar::{Real, Vec3};

const TIMESTAMP_TOL_S: f64 = 1e-9;

fn check_epoch<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> Result<(), OrbitError> {
    if (a.t_s - b.t_s).abs() > T::lit(TIMESTAMP_TOL_S) {
        return Err(OrbitError::TimestampMismatch {
            a: a.t_s.to_f64().unwrap_or(f64::NAN),
            b: b.t_s.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Minimum distance from the Earth's centre to the segment between two positions.
pub fn segment_clearance<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == T::zero() {
        return a.norm();
    }
    let s = (-a.dot(ab) / len2).max(T::zero()).min(T::one());
    (a + ab * s).norm()
}

/// Occultation test seen from `from`: the angle between the nadir direction
/// and the line of sight must exceed the Earth's tangent half-angle.
///
/// Matches [`line_of_sight`] for satellites on a common shell; for different
/// altitudes it can report occlusion when the target sits in front of the limb.
pub fn angle_condition<T: Real>(from: Vec3<T>, to: Vec3<T>, earth: &EarthModel<T>) -> bool {
    let rij = to - from;
    let ri = from.norm();
    let dij = rij.norm();
    if dij == T::zero() {
        return true;
    }
    let cos_theta = (-from).dot(rij) / (ri * dij);
    let re = earth.earth_radius_km;
    cos_theta < (ri * ri - re * re).sqrt() / ri
}

/// True when the straight segment between the satellites clears the Earth.
pub fn line_of_sight<T: Real>(
    a: &StateVector<T>,
    b: &StateVector<T>,
    earth: &EarthModel<T>,
) -> Result<bool, OrbitError> {
    check_epoch(a, b)?;
    Ok(segment_clearance(a.position_km, b.position_km) > earth.earth_radius_km)
}
