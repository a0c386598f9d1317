//! Reference sketches instantiated once per output port.

pub mod cm;
pub mod elastic;
pub mod flowlidar;
pub mod hash;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cm::CmSketch;
pub use elastic::{ElasticSketch, ES_DEFAULT_LAMBDA};
pub use flowlidar::{BloomFilter, FlowLidar, FL_DEFAULT_FP};

use crate::topology::{Port, NUM_PORTS};

/// Point-query frequency sketch keyed by flow id.
pub trait FlowSketch: Send + Sync {
    fn update(&mut self, key: u64, units: u64);
    fn query(&self, key: u64) -> u64;
    fn used_bytes(&self) -> usize;
    fn clear(&mut self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cs,
    Cm,
    Es,
    Flowlidar,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Cs, Scheme::Cm, Scheme::Es, Scheme::Flowlidar];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Cs => "cs",
            Scheme::Cm => "cm",
            Scheme::Es => "es",
            Scheme::Flowlidar => "flowlidar",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown scheme `{0}` (allowed: cs, cm, es, flowlidar)")]
pub struct UnknownScheme(pub String);

impl FromStr for Scheme {
    type Err = UnknownScheme;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub cm_rows: usize,
    pub es_lambda: u64,
    pub fl_fp_rate: f64,
    /// Flows each FlowLIDAR instance expects per period.
    pub fl_expected_flows: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            cm_rows: 3,
            es_lambda: ES_DEFAULT_LAMBDA,
            fl_fp_rate: FL_DEFAULT_FP,
            fl_expected_flows: 256,
        }
    }
}

const CM_FAMILY: u64 = 0xc0ff_ee00;

/// Four instances of one baseline sharing a byte budget.
pub struct PortedBaseline {
    pub scheme: Scheme,
    instances: Vec<Box<dyn FlowSketch>>,
    budgets: Vec<usize>,
}

impl fmt::Debug for PortedBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PortedBaseline")
            .field("scheme", &self.scheme)
            .field("budgets", &self.budgets)
            .finish()
    }
}

/// Equal shares of `total`; the first `total % parts` shares get one extra byte.
pub fn split_budget(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

impl PortedBaseline {
    /// Panics if `scheme` is [`Scheme::Cs`], which is not a per-port baseline.
    pub fn new(scheme: Scheme, budget_bytes: usize, params: &BaselineParams) -> Self {
        let budgets = split_budget(budget_bytes, NUM_PORTS);
        let instances = budgets
            .iter()
            .map(|&b| -> Box<dyn FlowSketch> {
                match scheme {
                    Scheme::Cm => Box::new(CmSketch::with_memory(b, params.cm_rows, CM_FAMILY)),
                    Scheme::Es => Box::new(ElasticSketch::with_memory(b, params.es_lambda)),
                    Scheme::Flowlidar => Box::new(FlowLidar::with_memory(
                        b,
                        params.fl_expected_flows,
                        params.fl_fp_rate,
                    )),
                    Scheme::Cs => panic!("CS is not a ported baseline"),
                }
            })
            .collect();
        Self {
            scheme,
            instances,
            budgets,
        }
    }

    /// Configured budget; equals the total handed to [`PortedBaseline::new`].
    pub fn memory_bytes(&self) -> usize {
        self.budgets.iter().sum()
    }

    /// Bytes actually occupied by sketch state (≤ the budget).
    pub fn used_bytes(&self) -> usize {
        self.instances.iter().map(|i| i.used_bytes()).sum()
    }

    pub fn update(&mut self, key: u64, port: Port, units: u64) {
        self.instances[port as usize - 1].update(key, units);
    }

    pub fn query(&self, key: u64, port: Port) -> u64 {
        self.instances[port as usize - 1].query(key)
    }

    pub fn clear(&mut self) {
        self.instances.iter_mut().for_each(|i| i.clear());
    }
}
