//! TOML scenario files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineParams, Scheme};
use crate::metrics::ReAggregate;
use crate::orbit::{parse_tle, EarthModel, Tle};
use crate::topology::{Constellation, ConstellationSpec, IslPolicy};
use crate::traffic::{random_stations, GroundStation, TrafficParams, DEFAULT_PROFILE};

/// One validation finding, with the config line of the offending key when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConstellationSource {
    Walker(ConstellationSpec),
    Tle {
        #[serde(default)]
        name: String,
        /// Relative paths resolve against the config file's directory.
        tle_file: PathBuf,
        #[serde(default = "default_raan_tol")]
        raan_tolerance_deg: f64,
    },
}

fn default_raan_tol() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FlowUniverse {
    /// Every ordered satellite pair.
    #[default]
    All,
    /// Pairs of satellites that currently serve a ground station.
    Access,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub offerload: f64,
    /// 64-byte units per second per station.
    pub isl_bandwidth_b: f64,
    #[serde(default = "default_profile")]
    pub diurnal_profile: Vec<f64>,
    #[serde(default)]
    pub stations: Vec<GroundStation>,
    /// Random stations when `stations` is empty.
    #[serde(default)]
    pub n_stations: usize,
    #[serde(default)]
    pub station_seed: u64,
    #[serde(default)]
    pub min_elevation_deg: f64,
}

fn default_profile() -> Vec<f64> {
    DEFAULT_PROFILE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarthConfig {
    pub mu_km3_s2: f64,
    pub earth_radius_km: f64,
}

impl Default for EarthConfig {
    fn default() -> Self {
        Self {
            mu_km3_s2: EarthModel::<f64>::DEFAULT_MU_KM3_S2,
            earth_radius_km: EarthModel::<f64>::DEFAULT_RADIUS_KM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub t0_s: f64,
    pub epoch_s: f64,
    pub horizon_s: f64,
    /// Epochs per measurement period.
    #[serde(default = "one")]
    pub seed_period: usize,
    /// Per-hop latency; zero delivers every packet inside its epoch.
    #[serde(default)]
    pub hop_delay_s: f64,
    #[serde(default)]
    pub flow_universe: FlowUniverse,
    /// Chance that a seed upload to one satellite is lost; that node then
    /// counts the period into its overflow word.
    #[serde(default)]
    pub control_loss_prob: f64,
    #[serde(default)]
    pub re_aggregate: ReAggregate,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<String>,
    /// Per-satellite measurement memory for every scheme.
    pub memory_bytes: usize,
    /// Per-scheme overrides of `memory_bytes`.
    #[serde(default)]
    pub memory_overrides: BTreeMap<String, usize>,
    #[serde(default = "default_cap")]
    pub seed_cap_factor: u64,
    #[serde(default = "default_lanes")]
    pub cs_lanes: usize,
    /// Flows each FlowLIDAR instance expects; 0 derives it from the plan.
    #[serde(default)]
    pub fl_expected_flows: usize,
    #[serde(default)]
    pub baselines: BaselineOverrides,
    pub constellation: ConstellationSource,
    #[serde(default)]
    pub isl: IslPolicy,
    #[serde(default)]
    pub earth: EarthConfig,
    pub traffic: TrafficConfig,
    /// Directory used to resolve relative paths; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineOverrides {
    pub cm_rows: usize,
    pub es_lambda: u64,
    pub fl_fp_rate: f64,
}

impl Default for BaselineOverrides {
    fn default() -> Self {
        let b = BaselineParams::default();
        Self {
            cm_rows: b.cm_rows,
            es_lambda: b.es_lambda,
            fl_fp_rate: b.fl_fp_rate,
        }
    }
}

fn one() -> usize {
    1
}
fn all_schemes() -> Vec<String> {
    Scheme::ALL.iter().map(|s| s.name().to_string()).collect()
}
fn default_cap() -> u64 {
    crate::seeds::DEFAULT_CAP_FACTOR
}
fn default_lanes() -> usize {
    4
}

/// First line that assigns `key`, 1-based.
pub fn find_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(leaf)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut s: Scenario =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        let diags = s.diagnostics();
        if diags.is_empty() {
            Ok(s)
        } else {
            Err(ConfigError::Invalid(
                diags
                    .into_iter()
                    .map(|mut d| {
                        d.line = find_line(text, &d.field);
                        d
                    })
                    .collect(),
            ))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn epochs(&self) -> usize {
        (self.horizon_s / self.epoch_s).round() as usize
    }

    pub fn periods(&self) -> usize {
        self.epochs().div_ceil(self.seed_period.max(1))
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        let mut v: Vec<Scheme> = self.schemes.iter().filter_map(|s| s.parse().ok()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn memory_for(&self, s: Scheme) -> usize {
        self.memory_overrides
            .get(s.name())
            .copied()
            .unwrap_or(self.memory_bytes)
    }

    pub fn earth_model(&self) -> EarthModel<f64> {
        EarthModel {
            mu_km3_s2: self.earth.mu_km3_s2,
            earth_radius_km: self.earth.earth_radius_km,
        }
    }

    pub fn stations(&self) -> Vec<GroundStation> {
        if self.traffic.stations.is_empty() {
            random_stations(self.traffic.n_stations, self.traffic.station_seed)
        } else {
            self.traffic.stations.clone()
        }
    }

    pub fn traffic_params(&self) -> TrafficParams {
        TrafficParams {
            offerload: self.traffic.offerload,
            isl_bandwidth_b: self.traffic.isl_bandwidth_b,
            n_ter: self.stations().len(),
            diurnal_profile: self.traffic.diurnal_profile.clone(),
            rng_seed: self.rng_seed,
        }
    }

    pub fn baseline_params(&self, fl_expected_flows: usize) -> BaselineParams {
        BaselineParams {
            cm_rows: self.baselines.cm_rows,
            es_lambda: self.baselines.es_lambda,
            fl_fp_rate: self.baselines.fl_fp_rate,
            fl_expected_flows,
        }
    }

    pub fn load_tles(path: &Path) -> Result<Vec<Tle>, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| l.starts_with("1 ") || l.starts_with("2 "))
            .collect();
        if lines.len() % 2 != 0 {
            return Err("TLE file has an unpaired line".into());
        }
        lines
            .chunks(2)
            .map(|c| parse_tle(c[0], c[1]).map_err(|e| e.to_string()))
            .collect()
    }

    pub fn build_constellation(&self) -> Result<Constellation, String> {
        let earth = self.earth_model();
        match &self.constellation {
            ConstellationSource::Walker(spec) => {
                Constellation::walker(spec, &earth).map_err(|e| e.to_string())
            }
            ConstellationSource::Tle {
                name,
                tle_file,
                raan_tolerance_deg,
            } => {
                let tles = Self::load_tles(&self.base_dir.join(tle_file))?;
                Constellation::from_tles(name, &tles, &earth, *raan_tolerance_deg)
                    .map_err(|e| e.to_string())
            }
        }
    }

    /// Every schema and invariant problem, without running anything.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let mut push = |field: &str, message: String| {
            d.push(Diagnostic {
                field: field.into(),
                line: None,
                message,
            })
        };
        if !(self.epoch_s > 0.0 && self.epoch_s.is_finite()) {
            push("epoch_s", "must be positive".into());
        } else if !(self.horizon_s >= self.epoch_s) {
            push("horizon_s", "must be at least epoch_s".into());
        } else {
            let k = self.horizon_s / self.epoch_s;
            if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                push(
                    "horizon_s",
                    format!(
                        "horizon {} s is not a multiple of epoch {} s",
                        self.horizon_s, self.epoch_s
                    ),
                );
            }
        }
        if !(0.0..=1.0).contains(&self.control_loss_prob) {
            push("control_loss_prob", "must be in [0, 1]".into());
        }
        if self.seed_period == 0 {
            push("seed_period", "must be at least 1".into());
        }
        if !(self.hop_delay_s >= 0.0 && self.hop_delay_s.is_finite()) {
            push("hop_delay_s", "must be finite and nonnegative".into());
        }
        if self.schemes.is_empty() {
            push("schemes", "at least one scheme is required".into());
        }
        for s in &self.schemes {
            if let Err(e) = s.parse::<Scheme>() {
                push("schemes", e.to_string());
            }
        }
        if self.memory_bytes == 0 {
            push("memory_bytes", "must be positive".into());
        } else if self.memory_bytes < 8 {
            push(
                "memory_bytes",
                "must hold at least one 8-byte counter".into(),
            );
        }
        for (k, &v) in &self.memory_overrides {
            if let Err(e) = k.parse::<Scheme>() {
                push("memory_overrides", e.to_string());
            }
            if v < 8 {
                push(
                    "memory_overrides",
                    format!("{k}: budget must be at least 8 bytes"),
                );
            }
        }
        if self.seed_cap_factor == 0 {
            push("seed_cap_factor", "must be at least 1".into());
        }
        if self.cs_lanes == 0 {
            push("cs_lanes", "must be at least 1".into());
        }
        if self.baselines.cm_rows == 0 {
            push("cm_rows", "must be at least 1".into());
        }
        if !(self.baselines.fl_fp_rate > 0.0 && self.baselines.fl_fp_rate < 1.0) {
            push("fl_fp_rate", "must be in (0, 1)".into());
        }
        if let Err(e) = EarthModel::new(self.earth.mu_km3_s2, self.earth.earth_radius_km) {
            push("earth", e.to_string());
        }
        match &self.constellation {
            ConstellationSource::Walker(spec) => {
                if let Err(e) = spec.validate() {
                    push("planes", e.to_string());
                }
            }
            ConstellationSource::Tle { tle_file, .. } => {
                if let Err(e) = Self::load_tles(&self.base_dir.join(tle_file)) {
                    push("tle_file", e);
                }
            }
        }
        if let Err(e) = self.isl.validate() {
            push("isl", e.to_string());
        }
        if self.traffic.stations.is_empty() && self.traffic.n_stations < 2 {
            push("n_stations", "need at least two stations".into());
        }
        for s in &self.traffic.stations {
            if let Err(e) = s.validate() {
                push("stations", e.to_string());
            }
        }
        if !(-90.0..90.0).contains(&self.traffic.min_elevation_deg) {
            push("min_elevation_deg", "must be in [-90, 90)".into());
        }
        let mut tp = self.traffic_params();
        tp.n_ter = tp.n_ter.max(1);
        if let Err(e) = tp.validate() {
            let field = match e.to_string() {
                m if m.contains("offerload") => "offerload",
                m if m.contains("isl_bandwidth") => "isl_bandwidth_b",
                _ => "diurnal_profile",
            };
            push(field, e.to_string());
        }
        d
    }
}
