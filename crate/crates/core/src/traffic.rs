//! Diurnal ground traffic, station-to-satellite mapping and packetization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::hash::mix64;
use crate::flows::FlowKey;
use crate::orbit::{EarthModel, StateVector};
use crate::scalar::Vec3;
use crate::sketch::{PacketRecord, UNIT_BYTES};
use crate::topology::SatId;

/// Sidereal rotation rate in rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

/// Two-peak day/evening profile, hour 0 = local midnight.
pub const DEFAULT_PROFILE: [f64; 24] = [
    0.30, 0.22, 0.18, 0.15, 0.15, 0.20, 0.35, 0.55, 0.75, 0.85, 0.90, 0.95, 0.90, 0.85, 0.85, 0.88,
    0.92, 0.98, 1.00, 1.00, 0.95, 0.80, 0.60, 0.42,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic parameters: {0}")]
    InvalidParams(String),
    #[error("station {id}: {reason}")]
    InvalidStation { id: usize, reason: String },
    #[error("station {0} has no visible satellite")]
    NoAccessSatellite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub id: usize,
    pub longitude_deg: f64,
    pub latitude_deg: f64,
}

impl GroundStation {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(-180.0..180.0).contains(&self.longitude_deg) {
            return Err(TrafficError::InvalidStation {
                id: self.id,
                reason: format!("longitude {} outside [-180, 180)", self.longitude_deg),
            });
        }
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(TrafficError::InvalidStation {
                id: self.id,
                reason: format!("latitude {} outside [-90, 90]", self.latitude_deg),
            });
        }
        Ok(())
    }

    /// Inertial position on a spherical Earth whose prime meridian sits on +x at t = 0.
    pub fn position_eci(&self, t_s: f64, earth: &EarthModel<f64>) -> Vec3<f64> {
        let lat = self.latitude_deg.to_radians();
        let lon = self.longitude_deg.to_radians() + EARTH_ROTATION_RAD_S * t_s;
        let r = earth.earth_radius_km;
        Vec3::new(
            r * lat.cos() * lon.cos(),
            r * lat.cos() * lon.sin(),
            r * lat.sin(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    pub offerload: f64,
    /// Per-station bandwidth in 64-byte units per second.
    pub isl_bandwidth_b: f64,
    pub n_ter: usize,
    pub diurnal_profile: Vec<f64>,
    pub rng_seed: u64,
}

impl TrafficParams {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: String| Err(TrafficError::InvalidParams(m));
        if !(self.offerload > 0.0 && self.offerload <= 1.0) {
            return bad(format!("offerload {} outside (0, 1]", self.offerload));
        }
        if !(self.isl_bandwidth_b > 0.0 && self.isl_bandwidth_b.is_finite()) {
            return bad("isl_bandwidth_b must be positive".into());
        }
        if self.diurnal_profile.len() != 24 {
            return bad(format!(
                "diurnal_profile needs 24 weights, got {}",
                self.diurnal_profile.len()
            ));
        }
        if self
            .diurnal_profile
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return bad("diurnal_profile weights must be finite and nonnegative".into());
        }
        if !(self.diurnal_profile.iter().sum::<f64>() > 0.0) {
            return bad("diurnal_profile weights sum to zero".into());
        }
        Ok(())
    }
}

/// `offerload · B · n_ter`.
pub fn total_demand(p: &TrafficParams) -> f64 {
    p.offerload * p.isl_bandwidth_b * p.n_ter as f64
}

/// `(⌊t/3600⌋ + ⌊x/15⌋) mod 24`.
pub fn local_hour(t_s: f64, longitude_deg: f64) -> usize {
    let h = (t_s / 3600.0).floor() as i64 + (longitude_deg / 15.0).floor() as i64;
    h.rem_euclid(24) as usize
}

/// Station counts per local hour at `t_s`.
pub fn hour_buckets(stations: &[GroundStation], t_s: f64) -> [usize; 24] {
    let mut n = [0; 24];
    for s in stations {
        n[local_hour(t_s, s.longitude_deg)] += 1;
    }
    n
}

/// Sum of profile weights over hours that hold at least one station, so that
/// station demands add up to `D_t`.
pub fn occupied_weight(p: &TrafficParams, buckets: &[usize; 24]) -> f64 {
    (0..24)
        .filter(|&h| buckets[h] > 0)
        .map(|h| p.diurnal_profile[h])
        .sum()
}

/// `D_t · (w_m / w_total) / n_m` for the station's local hour `m`.
pub fn station_demand(
    p: &TrafficParams,
    station: &GroundStation,
    stations: &[GroundStation],
    t_s: f64,
) -> f64 {
    let buckets = hour_buckets(stations, t_s);
    station_demand_in(p, station, &buckets, t_s)
}

fn station_demand_in(
    p: &TrafficParams,
    station: &GroundStation,
    buckets: &[usize; 24],
    t_s: f64,
) -> f64 {
    let m = local_hour(t_s, station.longitude_deg);
    let w_total = occupied_weight(p, buckets);
    if w_total <= 0.0 || buckets[m] == 0 {
        return 0.0;
    }
    total_demand(p) * p.diurnal_profile[m] / w_total / buckets[m] as f64
}

/// Splits `station_total` over every other station by `U(0.1, 1)` draws,
/// normalized so the row sums to `station_total`.
pub fn pairwise_demand<R: Rng>(
    station_total: f64,
    src: usize,
    n_stations: usize,
    rng: &mut R,
) -> Vec<(usize, f64)> {
    let draws: Vec<(usize, f64)> = (0..n_stations)
        .filter(|&j| j != src)
        .map(|j| (j, rng.gen_range(0.1..1.0)))
        .collect();
    let sum: f64 = draws.iter().map(|d| d.1).sum();
    if sum <= 0.0 {
        return draws.into_iter().map(|(j, _)| (j, 0.0)).collect();
    }
    draws
        .into_iter()
        .map(|(j, u)| (j, station_total * u / sum))
        .collect()
}

/// Station-level demand for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    pub t_s: f64,
    /// `(src_index, dst_index) -> units` over indices into the station list.
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl TrafficMatrix {
    pub fn mass(&self) -> f64 {
        self.entries.values().sum()
    }
}

pub fn traffic_matrix<R: Rng>(
    p: &TrafficParams,
    stations: &[GroundStation],
    t_s: f64,
    rng: &mut R,
) -> TrafficMatrix {
    let buckets = hour_buckets(stations, t_s);
    let mut entries = BTreeMap::new();
    if stations.len() >= 2 {
        for (i, s) in stations.iter().enumerate() {
            let total = station_demand_in(p, s, &buckets, t_s);
            for (j, u) in pairwise_demand(total, i, stations.len(), rng) {
                entries.insert((i, j), u);
            }
        }
    }
    TrafficMatrix { t_s, entries }
}

/// Nearest satellite above `min_elevation_deg` for each station.
pub fn access_satellites(
    stations: &[GroundStation],
    states: &[StateVector<f64>],
    earth: &EarthModel<f64>,
    t_s: f64,
    min_elevation_deg: f64,
) -> Result<Vec<SatId>, TrafficError> {
    let sin_min = min_elevation_deg.to_radians().sin();
    stations
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let g = st.position_eci(t_s, earth);
            let up = g.scale(1.0 / g.norm());
            states
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    let los = s.position_km - g;
                    let d = los.norm();
                    (los.dot(up) > sin_min * d).then_some((d, k))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, k)| k as SatId)
                .ok_or(TrafficError::NoAccessSatellite(i))
        })
        .collect()
}

/// Satellite-level demand plus the mass whose endpoints share an access satellite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SatelliteMatrix {
    pub flows: BTreeMap<FlowKey, f64>,
    pub local: f64,
}

impl SatelliteMatrix {
    pub fn mass(&self) -> f64 {
        self.flows.values().sum::<f64>() + self.local
    }

    /// Rows `t,src_sat,dst_sat,units`.
    pub fn to_csv_rows(&self, t_s: f64) -> String {
        let mut out = String::new();
        for (f, u) in &self.flows {
            writeln!(out, "{t_s:.3},{},{},{u:.9}", f.src, f.dst).unwrap();
        }
        out
    }
}

pub const TRAFFIC_CSV_HEADER: &str = "t,src_sat,dst_sat,units";

pub fn to_satellite_matrix(
    tm: &TrafficMatrix,
    access: &[SatId],
) -> Result<SatelliteMatrix, TrafficError> {
    let mut out = SatelliteMatrix::default();
    for (&(i, j), &u) in &tm.entries {
        let a = *access.get(i).ok_or(TrafficError::NoAccessSatellite(i))?;
        let b = *access.get(j).ok_or(TrafficError::NoAccessSatellite(j))?;
        if a == b {
            out.local += u;
        } else {
            *out.flows.entry(FlowKey { src: a, dst: b }).or_default() += u;
        }
    }
    Ok(out)
}

/// Whole-unit packet emission with per-flow fractional carry across epochs.
#[derive(Debug, Clone, Default)]
pub struct Packetizer {
    carry: BTreeMap<FlowKey, f64>,
}

impl Packetizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn carry(&self, f: &FlowKey) -> f64 {
        self.carry.get(f).copied().unwrap_or(0.0)
    }

    /// Emits `⌊carry + units⌋` 64-byte packets per flow in shuffled order.
    pub fn packetize<R: Rng>(
        &mut self,
        demand: &BTreeMap<FlowKey, f64>,
        t_s: f64,
        rng: &mut R,
    ) -> Vec<PacketRecord> {
        let mut out = Vec::new();
        for (f, &u) in demand {
            let c = self.carry.entry(*f).or_default();
            *c += u.max(0.0);
            let n = (*c + 1e-9).floor();
            *c = (*c - n).max(0.0);
            for _ in 0..n as u64 {
                out.push(PacketRecord {
                    src: f.src,
                    dst: f.dst,
                    size_bytes: UNIT_BYTES,
                    out_port: 0,
                    t_s,
                });
            }
        }
        out.shuffle(rng);
        out
    }
}

/// Independent generator for one purpose and epoch under a run seed.
pub fn derived_rng(run_seed: u64, purpose: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(mix64(run_seed, purpose), epoch))
}

pub const RNG_TRAFFIC: u64 = 1;
pub const RNG_SHUFFLE: u64 = 2;
pub const RNG_STATIONS: u64 = 3;
pub const RNG_CONTROL: u64 = 4;

/// Population-weighted regions: (weight, lat range, lon range).
const REGIONS: [(f64, (f64, f64), (f64, f64)); 8] = [
    (0.20, (25.0, 50.0), (-125.0, -70.0)),
    (0.18, (36.0, 60.0), (-10.0, 40.0)),
    (0.22, (20.0, 45.0), (100.0, 142.0)),
    (0.14, (8.0, 30.0), (68.0, 90.0)),
    (0.09, (-35.0, 5.0), (-75.0, -35.0)),
    (0.09, (-30.0, 15.0), (-15.0, 40.0)),
    (0.05, (-38.0, -20.0), (115.0, 153.0)),
    (0.03, (-10.0, 10.0), (95.0, 125.0)),
];

/// Stations scattered over populated land regions.
pub fn random_stations(n: usize, seed: u64) -> Vec<GroundStation> {
    let mut rng = derived_rng(seed, RNG_STATIONS, 0);
    let total: f64 = REGIONS.iter().map(|r| r.0).sum();
    (0..n)
        .map(|id| {
            let mut x = rng.gen_range(0.0..total);
            let mut reg = REGIONS[REGIONS.len() - 1];
            for r in REGIONS {
                if x < r.0 {
                    reg = r;
                    break;
                }
                x -= r.0;
            }
            GroundStation {
                id,
                latitude_deg: rng.gen_range(reg.1 .0..reg.1 .1),
                longitude_deg: rng.gen_range(reg.2 .0..reg.2 .1),
            }
        })
        .collect()
}
