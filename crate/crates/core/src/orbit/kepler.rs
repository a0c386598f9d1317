use super::{normalize_angle, EarthModel, KeplerianElements, OrbitError, StateVector};
use crate::scalar::{Real, Vec3};

pub const KEPLER_TOL: f64 = 1e-12;
pub const KEPLER_MAX_ITER: usize = 50;

/// Solves `g(x) = target` for a strictly increasing `g` with derivative `dg`.
///
/// Newton from `x0`; if it stalls, bisection on a widening bracket around `x0`.
fn newton_then_bisect<T: Real>(
    g: impl Fn(T) -> T,
    dg: impl Fn(T) -> T,
    target: T,
    x0: T,
) -> Option<T> {
    let tol = T::lit(KEPLER_TOL);
    let mut x = x0;
    for _ in 0..KEPLER_MAX_ITER {
        let f = g(x) - target;
        let d = dg(x);
        if !f.is_finite() || !(d > T::zero()) {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() <= tol {
            return Some(x);
        }
    }

    // Bisection fallback. f32 cannot reach 1e-12, so stop at the float
    // resolution of the bracket instead.
    let mut half = T::lit(4.0);
    let (mut lo, mut hi) = loop {
        let lo = x0 - half;
        let hi = x0 + half;
        let flo = g(lo) - target;
        let fhi = g(hi) - target;
        if !flo.is_finite() || !fhi.is_finite() {
            return None;
        }
        if flo <= T::zero() && fhi >= T::zero() {
            break (lo, hi);
        }
        half = half * T::lit(2.0);
        if half > T::lit(1e6) {
            return None;
        }
    };
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            return Some(mid);
        }
        if g(mid) - target > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((lo + hi) / T::lit(2.0))
}

/// Eccentric anomaly for mean anomaly `m` and eccentricity `e` (elliptic orbits).
pub fn solve_kepler<T: Real>(m: T, e: T) -> Result<T, OrbitError> {
    let x0 = if e < T::lit(0.8) { m } else { T::PI() };
    newton_then_bisect(|x: T| x - e * x.sin(), |x: T| T::one() - e * x.cos(), m, x0).ok_or(
        OrbitError::NoConvergence {
            mean_anomaly: m.to_f64().unwrap_or(f64::NAN),
        },
    )
}

/// Converts elements to an inertial state at `el.epoch_s`.
pub fn elements_to_state<T: Real>(
    el: &KeplerianElements<T>,
    earth: &EarthModel<T>,
) -> Result<StateVector<T>, OrbitError> {
    el.validate(earth)?;
    let a = el.semi_major_axis_km;
    let e = el.eccentricity;
    let mu = earth.mu_km3_s2;

    let ecc_anom = solve_kepler(normalize_angle(el.mean_anomaly_rad), e)?;
    let (sin_e, cos_e) = ecc_anom.sin_cos();
    let root = (T::one() - e * e).sqrt();

    // Perifocal frame.
    let r = a * (T::one() - e * cos_e);
    let px = a * (cos_e - e);
    let py = a * root * sin_e;
    let vfac = (mu * a).sqrt() / r;
    let vx = -vfac * sin_e;
    let vy = vfac * root * cos_e;

    let (so, co) = el.raan_rad.sin_cos();
    let (si, ci) = el.inclination_rad.sin_cos();
    let (sw, cw) = el.arg_perigee_rad.sin_cos();

    // Columns of R3(-Ω)·R1(-i)·R3(-ω) for the perifocal P and Q axes.
    let p_axis = Vec3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
    let q_axis = Vec3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);

    Ok(StateVector {
        position_km: p_axis * px + q_axis * py,
        velocity_km_s: p_axis * vx + q_axis * vy,
        t_s: el.epoch_s,
    })
}

/// Two-body state at `state.t_s + dt_s`.
///
/// Uses Lagrange f/g coefficients in the eccentric-anomaly difference, which
/// stays regular for circular and equatorial orbits.
pub fn propagate<T: Real>(
    state: &StateVector<T>,
    dt_s: T,
    earth: &EarthModel<T>,
) -> Result<StateVector<T>, OrbitError> {
    if dt_s == T::zero() {
        return Ok(*state);
    }
    let mu = earth.mu_km3_s2;
    let r0v = state.position_km;
    let v0v = state.velocity_km_s;
    let r0 = r0v.norm();
    let v0sq = v0v.dot(v0v);

    let energy = v0sq / T::lit(2.0) - mu / r0;
    if !(energy < T::zero()) {
        return Err(OrbitError::Unbound {
            energy: energy.to_f64().unwrap_or(f64::NAN),
        });
    }
    let a = -mu / (T::lit(2.0) * energy);
    let n = (mu / (a * a * a)).sqrt();
    let period = T::TAU() / n;

    // Whole revolutions leave the state unchanged; strip them so the solver
    // sees a residual mean anomaly in [0, 2π).
    let revs = (dt_s / period).floor();
    let dt_res = dt_s - revs * period;
    let m = n * dt_res;

    let sigma = r0v.dot(v0v) / mu.sqrt();
    let sqrt_a = a.sqrt();
    let c1 = T::one() - r0 / a;
    let c2 = sigma / sqrt_a;

    let de = newton_then_bisect(
        |x: T| x - c1 * x.sin() + c2 * (T::one() - x.cos()),
        |x: T| T::one() - c1 * x.cos() + c2 * x.sin(),
        m,
        m,
    )
    .ok_or(OrbitError::NoConvergence {
        mean_anomaly: m.to_f64().unwrap_or(f64::NAN),
    })?;

    let (sde, cde) = de.sin_cos();
    let r = a + (r0 - a) * cde + sigma * sqrt_a * sde;
    let f = T::one() - a / r0 * (T::one() - cde);
    let g = dt_res - (de - sde) / n;
    let fdot = -(mu * a).sqrt() / (r * r0) * sde;
    let gdot = T::one() - a / r * (T::one() - cde);

    Ok(StateVector {
        position_km: r0v * f + v0v * g,
        velocity_km_s: r0v * fdot + v0v * gdot,
        t_s: state.t_s + dt_s,
    })
}
