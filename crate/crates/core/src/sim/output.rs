//! Run-directory writers: topology/, seeds/, truth/, estimates/, traffic/, report.csv.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::config::Scenario;
use super::harness::{CountKey, EpochReport, Plan};
use crate::baselines::Scheme;
use crate::metrics::SweepSample;
use crate::seeds::{seed_tables_csv, SEED_CSV_HEADER};
use crate::sketch::READBACK_CSV_HEADER;
use crate::traffic::TRAFFIC_CSV_HEADER;

pub const REPORT_CSV_HEADER: &str =
    "scenario,scheme,load,memory_bytes,epoch,are,wmre,re,saturations,false_positives,prediction_misses";

pub const COUNTS_CSV_HEADER: &str = "sat_id,src,dst,port,units";

/// One row per (epoch, scheme), then a `mean` row per scheme.
pub fn report_csv(scenario: &Scenario, reports: &[EpochReport]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    let load = scenario.traffic.offerload;
    for r in reports {
        for s in &r.schemes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                scenario.name,
                s.scheme.name(),
                load,
                s.memory_bytes,
                r.epoch,
                s.metrics.are,
                s.metrics.wmre,
                s.metrics.re,
                s.saturations,
                s.metrics.false_positives,
                s.prediction_misses
            )
            .unwrap();
        }
    }
    let Some(first) = reports.first() else {
        return out;
    };
    for (i, s) in first.schemes.iter().enumerate() {
        let col = |f: &dyn Fn(&super::harness::SchemeReport) -> f64| {
            let v: Vec<f64> = reports
                .iter()
                .map(|r| f(&r.schemes[i]))
                .filter(|x| x.is_finite())
                .collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let total = |f: &dyn Fn(&super::harness::SchemeReport) -> u64| {
            reports.iter().map(|r| f(&r.schemes[i])).sum::<u64>()
        };
        writeln!(
            out,
            "{},{},{},{},mean,{},{},{},{},{},{}",
            scenario.name,
            s.scheme.name(),
            load,
            s.memory_bytes,
            col(&|x| x.metrics.are),
            col(&|x| x.metrics.wmre),
            col(&|x| x.metrics.re),
            total(&|x| x.saturations),
            total(&|x| x.metrics.false_positives as u64),
            total(&|x| x.prediction_misses)
        )
        .unwrap();
    }
    out
}

/// Per-epoch metric samples for the memory sweep.
pub fn sweep_samples(reports: &[EpochReport], seed: u64) -> Vec<SweepSample> {
    reports
        .iter()
        .flat_map(|r| {
            r.schemes.iter().map(move |s| SweepSample {
                scheme: s.scheme.name().to_string(),
                memory_bytes: s.memory_bytes,
                seed,
                epoch: r.epoch,
                are: s.metrics.are,
                wmre: s.metrics.wmre,
                re: s.metrics.re,
            })
        })
        .collect()
}

pub fn counts_csv(m: &BTreeMap<CountKey, u64>) -> String {
    let mut out = format!("{COUNTS_CSV_HEADER}\n");
    for ((sat, f, port), v) in m {
        writeln!(out, "{sat},{},{},{port},{v}", f.src, f.dst).unwrap();
    }
    out
}

fn put(root: &Path, rel: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let path = root.join(&rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    written.push(rel);
    Ok(())
}

/// Relative paths of every file `write_run_dir` produces, in write order.
pub fn planned_outputs(scenario: &Scenario, plan: &Plan) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for e in &plan.epochs {
        v.push(PathBuf::from(format!("topology/epoch_{:05}.txt", e.index)));
    }
    v.push(PathBuf::from("seeds/seeds.csv"));
    v.push(PathBuf::from("traffic/traffic.csv"));
    for p in &plan.periods {
        v.push(PathBuf::from(format!("truth/epoch_{:05}.csv", p.index)));
        for s in scenario.schemes() {
            v.push(PathBuf::from(format!(
                "estimates/{}/epoch_{:05}.csv",
                s.name(),
                p.index
            )));
        }
        if scenario.schemes().contains(&Scheme::Cs) {
            v.push(PathBuf::from(format!("readback/epoch_{:05}.csv", p.index)));
        }
    }
    v.push(PathBuf::from("report.csv"));
    v
}

/// Writes all artifacts; `reports` must come from a run that retained maps.
pub fn write_run_dir(
    root: &Path,
    scenario: &Scenario,
    plan: &Plan,
    reports: &[EpochReport],
) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for e in &plan.epochs {
        let text = format!(
            "# t={} s; id then ports 1..4, '-' unused\n{}",
            e.t_s,
            e.snapshot.to_adjacency_text()
        );
        put(
            root,
            format!("topology/epoch_{:05}.txt", e.index).into(),
            &text,
            &mut written,
        )?;
    }
    let mut seeds = format!("{SEED_CSV_HEADER}\n");
    for p in &plan.periods {
        seeds.push_str(&seed_tables_csv(&p.seeds));
    }
    put(root, "seeds/seeds.csv".into(), &seeds, &mut written)?;

    let mut traffic = format!("{TRAFFIC_CSV_HEADER}\n");
    for r in reports {
        for (t, m) in r.traffic.iter().flatten() {
            traffic.push_str(&m.to_csv_rows(*t));
        }
    }
    put(root, "traffic/traffic.csv".into(), &traffic, &mut written)?;

    for r in reports {
        if let Some(t) = &r.truth {
            put(
                root,
                format!("truth/epoch_{:05}.csv", r.epoch).into(),
                &counts_csv(t),
                &mut written,
            )?;
        }
        for s in &r.schemes {
            if let Some(e) = &s.estimates {
                let rel = format!("estimates/{}/epoch_{:05}.csv", s.scheme.name(), r.epoch);
                put(root, rel.into(), &counts_csv(e), &mut written)?;
            }
        }
        if let Some(rb) = &r.readbacks {
            let mut text = format!("{READBACK_CSV_HEADER}\n");
            rb.iter().for_each(|b| text.push_str(&b.to_csv_rows()));
            put(
                root,
                format!("readback/epoch_{:05}.csv", r.epoch).into(),
                &text,
                &mut written,
            )?;
        }
    }
    put(
        root,
        "report.csv".into(),
        &report_csv(scenario, reports),
        &mut written,
    )?;
    Ok(written)
}
