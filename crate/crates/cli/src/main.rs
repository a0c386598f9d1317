use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use countingstars::metrics::{sweep, sweep_csv, SweepSample};
use countingstars::sim::harness::{run_with_plan, Plan, RunOptions};
use countingstars::sim::output::{planned_outputs, sweep_samples, write_run_dir};
use countingstars::sim::{ConfigError, Scenario, SimError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "countingstars",
    version,
    about = "LEO flow measurement simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one scenario into a fresh directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-satellite bytes for every scheme.
        #[arg(long)]
        memory: Option<usize>,
    },
    /// Memory x seed cross product, aggregated into sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        memory: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    epoch_s: Option<f64>,
    #[arg(long)]
    seed_period: Option<usize>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn config_failure(e: ConfigError) -> Failure {
    match e {
        ConfigError::Invalid(d) => Failure::Config(
            d.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => Failure::Config(other.to_string()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    scenario_name: String,
    scenario_hash: String,
    rng_seed: u64,
    started_unix_s: u64,
    finished_unix_s: Option<u64>,
    complete: bool,
    outputs: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// SHA-256 of the scenario as JSON with sorted keys.
fn scenario_hash(s: &Scenario) -> Result<String> {
    let v = serde_json::to_value(s)?;
    let text = serde_json::to_string(&v)?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    fs::write(dir.join("manifest.json"), text + "\n").context("writing manifest")
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(&common.config).map_err(config_failure)?;
    if let Some(list) = &common.schemes {
        s.schemes = list.clone();
    }
    if let Some(e) = common.epoch_s {
        s.epoch_s = e;
    }
    if let Some(p) = common.seed_period {
        s.seed_period = p;
    }
    check(&s)?;
    Ok(s)
}

fn check(s: &Scenario) -> Result<(), Failure> {
    let d = s.diagnostics();
    if d.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(
            d.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("\n"),
        ))
    }
}

fn fresh_dir(out: &Path) -> Result<()> {
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        anyhow::bail!("output directory {} is not empty", out.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_validate(config: &Path) -> Result<(), Failure> {
    let s = Scenario::load(config).map_err(config_failure)?;
    println!(
        "{}: ok ({} epochs, {} periods, schemes {})",
        s.name,
        s.epochs(),
        s.periods(),
        s.schemes.join(",")
    );
    Ok(())
}

fn cmd_run(common: &Common, seed: Option<u64>, memory: Option<usize>) -> Result<(), Failure> {
    let mut s = load(common)?;
    if let Some(seed) = seed {
        s.rng_seed = seed;
    }
    if let Some(m) = memory {
        s.memory_bytes = m;
        s.memory_overrides.clear();
    }
    check(&s)?;
    let plan = Plan::build(&s)?;
    fresh_dir(&common.out)?;
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        scenario_name: s.name.clone(),
        scenario_hash: scenario_hash(&s)?,
        rng_seed: s.rng_seed,
        started_unix_s: now(),
        finished_unix_s: None,
        complete: false,
        outputs: std::iter::once("scenario.toml".to_string())
            .chain(
                planned_outputs(&s, &plan)
                    .iter()
                    .map(|p| p.display().to_string()),
            )
            .collect(),
    };
    write_manifest(&common.out, &manifest)?;
    fs::write(common.out.join("scenario.toml"), s.to_toml()).context("writing scenario copy")?;

    let reports = run_with_plan(&s, &plan, RunOptions { retain_maps: true })?;
    let written = write_run_dir(&common.out, &s, &plan, &reports).context("writing outputs")?;
    manifest.outputs = std::iter::once("scenario.toml".to_string())
        .chain(written.iter().map(|p| p.display().to_string()))
        .collect();
    manifest.finished_unix_s = Some(now());
    manifest.complete = true;
    write_manifest(&common.out, &manifest)?;
    println!(
        "{}: {} periods, {} files in {}",
        s.name,
        reports.len(),
        manifest.outputs.len() + 1,
        common.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CellMarker {
    memory_bytes: usize,
    seed: u64,
    scenario_hash: String,
    samples: usize,
}

fn cell_dir(out: &Path, memory: usize, seed: u64) -> PathBuf {
    out.join("cells").join(format!("m{memory}_s{seed}"))
}

fn read_samples(path: &Path) -> Result<Vec<SweepSample>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            anyhow::ensure!(f.len() == 7, "bad sample row: {l}");
            Ok(SweepSample {
                scheme: f[0].into(),
                memory_bytes: f[1].parse()?,
                seed: f[2].parse()?,
                epoch: f[3].parse()?,
                are: f[4].parse()?,
                wmre: f[5].parse()?,
                re: f[6].parse()?,
            })
        })
        .collect()
}

fn samples_csv(v: &[SweepSample]) -> String {
    let mut out = String::from("scheme,memory_bytes,seed,epoch,are,wmre,re\n");
    for x in v {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            x.scheme, x.memory_bytes, x.seed, x.epoch, x.are, x.wmre, x.re
        ));
    }
    out
}

/// Reuses a cell when its marker names the same scenario.
fn done_cell(dir: &Path, hash: &str) -> Option<Vec<SweepSample>> {
    let m: CellMarker =
        serde_json::from_str(&fs::read_to_string(dir.join("done.json")).ok()?).ok()?;
    if m.scenario_hash != hash {
        return None;
    }
    let v = read_samples(&dir.join("samples.csv")).ok()?;
    (v.len() == m.samples).then_some(v)
}

fn cmd_sweep(common: &Common, memory: &[usize], seeds: &[u64], jobs: usize) -> Result<(), Failure> {
    let s = load(common)?;
    if memory.contains(&0) {
        return Err(Failure::Config(
            "memory: grid values must be positive".into(),
        ));
    }
    let hash = scenario_hash(&s)?;
    fs::create_dir_all(&common.out).context("creating sweep directory")?;
    let manifest_path = common.out.join("manifest.json");
    if let Ok(text) = fs::read_to_string(&manifest_path) {
        let old: RunManifest = serde_json::from_str(&text).context("reading existing manifest")?;
        if old.scenario_hash != hash {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "{} holds a sweep of a different scenario",
                common.out.display()
            )));
        }
    }
    let cells: Vec<(usize, u64)> = memory
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&k| (m, k)))
        .collect();
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "sweep".into(),
        scenario_name: s.name.clone(),
        scenario_hash: hash.clone(),
        rng_seed: s.rng_seed,
        started_unix_s: now(),
        finished_unix_s: None,
        complete: false,
        outputs: cells
            .iter()
            .flat_map(|&(m, k)| {
                let d = format!("cells/m{m}_s{k}");
                [format!("{d}/samples.csv"), format!("{d}/done.json")]
            })
            .chain(["sweep.csv".to_string()])
            .collect(),
    };
    write_manifest(&common.out, &manifest)?;

    let plan = Plan::build(&s)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<(Vec<SweepSample>, bool), Failure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, k)| {
                let dir = cell_dir(&common.out, m, k);
                if let Some(v) = done_cell(&dir, &hash) {
                    return Ok((v, true));
                }
                let mut cell = s.clone();
                cell.memory_bytes = m;
                cell.memory_overrides.clear();
                cell.rng_seed = k;
                let reports = run_with_plan(&cell, &plan, RunOptions::default())?;
                let v = sweep_samples(&reports, k);
                fs::create_dir_all(&dir).context("creating cell directory")?;
                fs::write(dir.join("samples.csv"), samples_csv(&v)).context("writing samples")?;
                let marker = CellMarker {
                    memory_bytes: m,
                    seed: k,
                    scenario_hash: hash.clone(),
                    samples: v.len(),
                };
                fs::write(
                    dir.join("done.json"),
                    serde_json::to_string(&marker).map_err(anyhow::Error::from)?,
                )
                .context("writing cell marker")?;
                Ok((v, false))
            })
            .collect()
    });
    let mut samples = Vec::new();
    let mut reused = 0;
    for r in results {
        let (v, was_done) = r?;
        reused += was_done as usize;
        samples.extend(v);
    }
    let schemes: Vec<String> = s.schemes().iter().map(|x| x.name().to_string()).collect();
    let rows = sweep(&samples, &schemes, memory).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(common.out.join("sweep.csv"), sweep_csv(&rows)).context("writing sweep.csv")?;
    manifest.finished_unix_s = Some(now());
    manifest.complete = true;
    write_manifest(&common.out, &manifest)?;
    println!(
        "{}: {} cells ({} reused), {} rows in {}",
        s.name,
        cells.len(),
        reused,
        rows.len(),
        common.out.join("sweep.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Validate { config } => cmd_validate(config),
        Cmd::Run {
            common,
            seed,
            memory,
        } => cmd_run(common, *seed, *memory),
        Cmd::Sweep {
            common,
            memory,
            seeds,
            jobs,
        } => cmd_sweep(common, memory, seeds, *jobs),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error:\n{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("runtime error: {e:#}");
            ExitCode::from(2)
        }
    }
}
