//! Accuracy metrics over (key → count) maps and memory-sweep aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("truth has no positive entries")]
    EmptyTruth,
    #[error("true total is zero")]
    ZeroTruth,
    #[error("no report for scheme {scheme} at {memory_bytes} bytes")]
    MissingGridPoint { scheme: String, memory_bytes: usize },
}

/// Mean of `|f − f̂| / f` over keys with `f > 0`; absent estimates count as 0.
pub fn are<T: Real, K: Ord>(
    truth: &BTreeMap<K, u64>,
    est: &BTreeMap<K, u64>,
) -> Result<T, MetricError> {
    let mut sum = T::zero();
    let mut n = 0u64;
    for (k, &f) in truth {
        if f == 0 {
            continue;
        }
        let e = est.get(k).copied().unwrap_or(0);
        sum += T::from_count(f.abs_diff(e)) / T::from_count(f);
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::EmptyTruth);
    }
    Ok(sum / T::from_count(n))
}

fn histogram<K>(m: &BTreeMap<K, u64>) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for &v in m.values() {
        if v > 0 {
            *h.entry(v).or_default() += 1;
        }
    }
    h
}

/// `Σ|n_i − n̂_i| / Σ((n_i + n̂_i)/2)` over flow-size histograms.
pub fn wmre<T: Real, K: Ord>(
    truth: &BTreeMap<K, u64>,
    est: &BTreeMap<K, u64>,
) -> Result<T, MetricError> {
    wmre_hist(&histogram(truth), &histogram(est))
}

pub fn wmre_hist<T: Real>(
    truth: &BTreeMap<u64, u64>,
    est: &BTreeMap<u64, u64>,
) -> Result<T, MetricError> {
    if truth.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    let mut num = T::zero();
    let mut den = T::zero();
    let sizes: std::collections::BTreeSet<u64> = truth.keys().chain(est.keys()).copied().collect();
    for s in sizes {
        let a = truth.get(&s).copied().unwrap_or(0);
        let b = est.get(&s).copied().unwrap_or(0);
        num += T::from_count(a.abs_diff(b));
        den += T::from_count(a + b) / T::lit(2.0);
    }
    Ok(num / den)
}

/// `|true − est| / true`.
pub fn re<T: Real>(true_total: u64, est_total: u64) -> Result<T, MetricError> {
    if true_total == 0 {
        return Err(MetricError::ZeroTruth);
    }
    Ok(T::from_count(true_total.abs_diff(est_total)) / T::from_count(true_total))
}

/// Metrics for one scheme over one measurement period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet<T> {
    pub are: T,
    pub wmre: T,
    pub re: T,
    /// Keys in the truth support.
    pub n_flows: usize,
    /// Keys with a nonzero estimate and zero truth.
    pub false_positives: usize,
}

/// Totals that RE compares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReAggregate {
    /// Keys with a nonzero count.
    #[default]
    Flows,
    /// Summed units.
    Units,
}

/// All three metrics, with RE over distinct-key cardinality.
///
/// An empty truth scores 0 when the estimate is empty too and NaN otherwise.
pub fn evaluate<T: Real, K: Ord>(truth: &BTreeMap<K, u64>, est: &BTreeMap<K, u64>) -> MetricSet<T> {
    evaluate_with(truth, est, ReAggregate::Flows)
}

pub fn evaluate_with<T: Real, K: Ord>(
    truth: &BTreeMap<K, u64>,
    est: &BTreeMap<K, u64>,
    agg: ReAggregate,
) -> MetricSet<T> {
    let true_keys = truth.values().filter(|&&v| v > 0).count();
    let est_keys = est.values().filter(|&&v| v > 0).count();
    let false_positives = est
        .iter()
        .filter(|(k, &v)| v > 0 && truth.get(*k).copied().unwrap_or(0) == 0)
        .count();
    if true_keys == 0 {
        let v = if est_keys == 0 { T::zero() } else { T::nan() };
        return MetricSet {
            are: v,
            wmre: v,
            re: v,
            n_flows: 0,
            false_positives,
        };
    }
    MetricSet {
        are: are(truth, est).expect("nonempty truth"),
        wmre: wmre(truth, est).expect("nonempty truth"),
        re: match agg {
            ReAggregate::Flows => re(true_keys as u64, est_keys as u64),
            ReAggregate::Units => re(truth.values().sum(), est.values().sum()),
        }
        .expect("nonempty truth"),
        n_flows: true_keys,
        false_positives,
    }
}

/// One per-epoch measurement for the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub scheme: String,
    pub memory_bytes: usize,
    pub seed: u64,
    pub epoch: u64,
    pub are: f64,
    pub wmre: f64,
    pub re: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Sample statistics over the finite values.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: String,
    pub memory_bytes: usize,
    pub are: MeanStd,
    pub wmre: MeanStd,
    pub re: MeanStd,
    pub seeds: usize,
}

/// Mean and standard deviation per (scheme, memory) over epochs and seeds.
pub fn sweep(
    samples: &[SweepSample],
    schemes: &[String],
    memory_grid: &[usize],
) -> Result<Vec<SweepRow>, MetricError> {
    let mut rows = Vec::new();
    for s in schemes {
        for &m in memory_grid {
            let cell: Vec<&SweepSample> = samples
                .iter()
                .filter(|x| &x.scheme == s && x.memory_bytes == m)
                .collect();
            if cell.is_empty() {
                return Err(MetricError::MissingGridPoint {
                    scheme: s.clone(),
                    memory_bytes: m,
                });
            }
            let mut seeds: Vec<u64> = cell.iter().map(|x| x.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            rows.push(SweepRow {
                scheme: s.clone(),
                memory_bytes: m,
                are: MeanStd::of(cell.iter().map(|x| x.are)),
                wmre: MeanStd::of(cell.iter().map(|x| x.wmre)),
                re: MeanStd::of(cell.iter().map(|x| x.re)),
                seeds: seeds.len(),
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str =
    "scheme,memory_bytes,seeds,samples,are_mean,are_std,wmre_mean,wmre_std,re_mean,re_std";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.memory_bytes,
            r.seeds,
            r.are.n,
            r.are.mean,
            r.are.std,
            r.wmre.mean,
            r.wmre.std,
            r.re.mean,
            r.re.std
        )
        .unwrap();
    }
    out
}
