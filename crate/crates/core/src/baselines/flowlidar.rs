//! Bloom-filter new-flow detection in front of a Count-Min.
//!
//! Reconstructed from a one-line description: the filter flags first
//! occurrences for a control-plane log and every count goes to the Count-Min.

use super::cm::CmSketch;
use super::hash::{bucket, mix64, row_seed};
use super::FlowSketch;

pub const FL_DEFAULT_FP: f64 = 0.01;
pub const FL_CM_ROWS: usize = 3;
const FL_BLOOM_FAMILY: u64 = 0xb100_3f11;
const FL_CM_FAMILY: u64 = 0xf10_71da;

#[derive(Debug, Clone)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: usize,
    seeds: Vec<u64>,
}

impl BloomFilter {
    pub fn new(m_bits: usize, k: usize) -> Self {
        let m = m_bits.max(1);
        Self {
            bits: vec![0; m.div_ceil(64)],
            m,
            seeds: (0..k.max(1))
                .map(|i| row_seed(FL_BLOOM_FAMILY, i))
                .collect(),
        }
    }

    /// Bits for false-positive rate `p` at `n` keys: `-n ln p / ln² 2`.
    pub fn optimal_bits(n: usize, p: f64) -> usize {
        (-(n.max(1) as f64) * p.ln() / std::f64::consts::LN_2.powi(2)).ceil() as usize
    }

    /// `round(m/n · ln 2)`, at least 1.
    pub fn optimal_hashes(m: usize, n: usize) -> usize {
        ((m as f64 / n.max(1) as f64) * std::f64::consts::LN_2)
            .round()
            .max(1.0) as usize
    }

    /// `(1 − e^{−kn/m})^k`.
    pub fn expected_fp_rate(&self, n: usize) -> f64 {
        let k = self.seeds.len() as f64;
        (1.0 - (-k * n as f64 / self.m as f64).exp()).powf(k)
    }

    pub fn m_bits(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    /// Sets the key's bits; returns true if they were all set already.
    pub fn check_and_insert(&mut self, key: u64) -> bool {
        let mut present = true;
        for &s in &self.seeds {
            let i = bucket(mix64(key, s), self.m);
            let (w, b) = (i / 64, i % 64);
            if self.bits[w] & (1 << b) == 0 {
                present = false;
                self.bits[w] |= 1 << b;
            }
        }
        present
    }

    pub fn contains(&self, key: u64) -> bool {
        self.seeds.iter().all(|&s| {
            let i = bucket(mix64(key, s), self.m);
            self.bits[i / 64] & (1 << (i % 64)) != 0
        })
    }

    pub fn memory_bytes(&self) -> usize {
        self.m.div_ceil(8)
    }

    pub fn clear(&mut self) {
        self.bits.iter_mut().for_each(|w| *w = 0);
    }
}

#[derive(Debug, Clone)]
pub struct FlowLidar {
    pub bloom: BloomFilter,
    pub cm: CmSketch,
    log: Vec<u64>,
}

impl FlowLidar {
    /// Filter sized for `fp` at `expected_flows`, capped at a quarter of
    /// `bytes`; the remainder goes to a 3-row Count-Min.
    pub fn with_memory(bytes: usize, expected_flows: usize, fp: f64) -> Self {
        let want = BloomFilter::optimal_bits(expected_flows, fp).div_ceil(8);
        let bloom_bytes = want.min(bytes / 4).max(1);
        let m = bloom_bytes * 8;
        let k = BloomFilter::optimal_hashes(m, expected_flows);
        Self {
            bloom: BloomFilter::new(m, k),
            cm: CmSketch::with_memory(bytes.saturating_sub(bloom_bytes), FL_CM_ROWS, FL_CM_FAMILY),
            log: Vec::new(),
        }
    }

    pub fn update(&mut self, key: u64, units: u64) {
        if !self.bloom.check_and_insert(key) {
            self.log.push(key);
        }
        self.cm.update(key, units);
    }

    pub fn query(&self, key: u64) -> u64 {
        self.cm.query(key)
    }

    /// Keys reported as new, in arrival order.
    pub fn new_flows(&self) -> &[u64] {
        &self.log
    }

    pub fn memory_bytes(&self) -> usize {
        self.bloom.memory_bytes() + self.cm.memory_bytes()
    }

    pub fn clear(&mut self) {
        self.bloom.clear();
        self.cm.clear();
        self.log.clear();
    }
}

impl FlowSketch for FlowLidar {
    fn update(&mut self, key: u64, units: u64) {
        FlowLidar::update(self, key, units)
    }
    fn query(&self, key: u64) -> u64 {
        FlowLidar::query(self, key)
    }
    fn used_bytes(&self) -> usize {
        self.memory_bytes()
    }
    fn clear(&mut self) {
        FlowLidar::clear(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_flow_logged_once() {
        let mut f = FlowLidar::with_memory(1024, 100, FL_DEFAULT_FP);
        f.update(5, 1);
        f.update(5, 2);
        assert_eq!(f.new_flows(), &[5]);
        assert_eq!(f.query(5), f.cm.query(5));
        assert_eq!(f.query(5), 3);
    }

    #[test]
    fn fp_rate_near_analytic() {
        let n = 2000;
        let mut f = FlowLidar::with_memory(1 << 20, n, FL_DEFAULT_FP);
        for k in 0..n as u64 {
            f.update(mix64(k, 1), 1);
        }
        let logged = f.new_flows().len();
        assert!(
            logged as f64 >= n as f64 * (1.0 - FL_DEFAULT_FP),
            "{logged}"
        );
        for k in 0..n as u64 {
            assert!(f.bloom.contains(mix64(k, 1)));
        }
        let probes = 20_000u64;
        let fps = (0..probes)
            .filter(|&k| f.bloom.contains(mix64(k + 1_000_000, 1)))
            .count();
        let measured = fps as f64 / probes as f64;
        let analytic = f.bloom.expected_fp_rate(n);
        assert!(analytic <= 0.011, "{analytic}");
        assert!(
            (measured - analytic).abs() < 0.005,
            "{measured} vs {analytic}"
        );
    }

    #[test]
    fn bloom_capped_at_quarter_budget() {
        let f = FlowLidar::with_memory(400, 10_000, FL_DEFAULT_FP);
        assert_eq!(f.bloom.memory_bytes(), 100);
        assert!(f.memory_bytes() <= 400);
    }
}
