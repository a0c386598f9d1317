use super::hash::{bucket, mix64, row_seed};
use super::FlowSketch;

pub const CM_COUNTER_BYTES: usize = 4;
const CM_FAMILY: u64 = 0xc0ff_ee00;

/// Count-Min with 32-bit saturating counters.
#[derive(Debug, Clone)]
pub struct CmSketch {
    pub d: usize,
    pub w: usize,
    counters: Vec<u32>,
    seeds: Vec<u64>,
}

impl CmSketch {
    pub fn new(d: usize, w: usize) -> Self {
        Self::with_family(d, w, CM_FAMILY)
    }

    pub fn with_family(d: usize, w: usize, family: u64) -> Self {
        let d = d.max(1);
        let w = w.max(1);
        Self {
            d,
            w,
            counters: vec![0; d * w],
            seeds: (0..d).map(|r| row_seed(family, r)).collect(),
        }
    }

    /// Widest `d`-row sketch that fits `bytes` (at least one column).
    pub fn with_memory(bytes: usize, d: usize, family: u64) -> Self {
        let d = d.max(1);
        Self::with_family(d, bytes / (CM_COUNTER_BYTES * d), family)
    }

    /// Sized from an (ε, δ) accuracy target.
    pub fn with_error_bound(eps: f64, delta: f64) -> Self {
        let w = (std::f64::consts::E / eps).ceil() as usize;
        let d = (1.0 / delta).ln().ceil() as usize;
        Self::new(d, w)
    }

    fn index(&self, row: usize, key: u64) -> usize {
        row * self.w + bucket(mix64(key, self.seeds[row]), self.w)
    }

    pub fn update(&mut self, key: u64, units: u64) {
        let inc = units.min(u32::MAX as u64) as u32;
        for r in 0..self.d {
            let i = self.index(r, key);
            self.counters[i] = self.counters[i].saturating_add(inc);
        }
    }

    pub fn query(&self, key: u64) -> u64 {
        (0..self.d)
            .map(|r| self.counters[self.index(r, key)] as u64)
            .min()
            .unwrap_or(0)
    }

    pub fn memory_bytes(&self) -> usize {
        self.counters.len() * CM_COUNTER_BYTES
    }

    pub fn clear(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = 0);
    }
}

impl FlowSketch for CmSketch {
    fn update(&mut self, key: u64, units: u64) {
        CmSketch::update(self, key, units)
    }
    fn query(&self, key: u64) -> u64 {
        CmSketch::query(self, key)
    }
    fn used_bytes(&self) -> usize {
        self.memory_bytes()
    }
    fn clear(&mut self) {
        CmSketch::clear(self)
    }
}
