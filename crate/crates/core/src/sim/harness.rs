//! Epoch loop: plan topology and seeds, forward packets, count, read back, score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{FlowUniverse, Scenario};
use crate::baselines::{PortedBaseline, Scheme};
use crate::flows::{
    ecmp_successors, flow_sets_between, union_flow_sets, DistanceMatrix, FlowKey, FlowSet,
};
use crate::metrics::{evaluate_with, MetricSet};
use crate::orbit::OrbitError;
use crate::seeds::{SeedError, SeedForge, SeedTable};
use crate::sketch::{packet_units, CsNode, PacketRecord, PortAggCounter, SketchError};
use crate::topology::{
    apply_isl_policy, visibility_graph, Constellation, Port, SatId, TopologySnapshot, NUM_PORTS,
};
use crate::traffic::{
    access_satellites, derived_rng, to_satellite_matrix, traffic_matrix, GroundStation, Packetizer,
    SatelliteMatrix, TrafficError, RNG_CONTROL, RNG_SHUFFLE, RNG_TRAFFIC,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("invariant breach in epoch {epoch}: {detail}")]
    Invariant { epoch: u64, detail: String },
}

/// Per-snapshot prediction shared by every run of a scenario.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub index: u64,
    pub t_s: f64,
    pub snapshot: TopologySnapshot,
    pub adjacency: Vec<Vec<SatId>>,
    pub dist: DistanceMatrix,
    pub access: Vec<SatId>,
}

/// Flow sets and seeds for one measurement period.
#[derive(Debug, Clone)]
pub struct PeriodPlan {
    pub index: u64,
    pub epochs: std::ops::Range<usize>,
    pub flow_sets: Vec<FlowSet>,
    pub seeds: Vec<SeedTable>,
}

/// Everything the ground controller predicts ahead of a run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub n_sats: usize,
    pub stations: Vec<GroundStation>,
    pub epochs: Vec<EpochPlan>,
    pub periods: Vec<PeriodPlan>,
    pub unreachable_pairs: usize,
    pub seed_searches: usize,
    pub seed_reuses: usize,
}

impl Plan {
    pub fn build(scenario: &Scenario) -> Result<Self, SimError> {
        let diags = scenario.diagnostics();
        if !diags.is_empty() {
            return Err(SimError::Config(
                diags
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
        let earth = scenario.earth_model();
        let constellation = scenario.build_constellation().map_err(SimError::Config)?;
        let initial = constellation.initial_states(&earth)?;
        let stations = scenario.stations();
        let min_el = scenario.traffic.min_elevation_deg;

        let epochs: Vec<EpochPlan> = (0..scenario.epochs())
            .into_par_iter()
            .map(|k| -> Result<EpochPlan, SimError> {
                let t = scenario.t0_s + k as f64 * scenario.epoch_s;
                let states = Constellation::states_at(&initial, t, &earth)?;
                let gv = visibility_graph(&states, &earth)?;
                let snapshot = apply_isl_policy(&gv, &constellation.layout, &scenario.isl, &states);
                let adjacency = snapshot.adjacency();
                let dist = DistanceMatrix::from_adjacency(&adjacency);
                let access = access_satellites(&stations, &states, &earth, t, min_el)?;
                Ok(EpochPlan {
                    index: k as u64,
                    t_s: t,
                    snapshot,
                    adjacency,
                    dist,
                    access,
                })
            })
            .collect::<Result<_, _>>()?;

        let n_sats = constellation.layout.total();
        let all: Vec<SatId> = (0..n_sats as SatId).collect();
        let mut forge = SeedForge::new(scenario.seed_cap_factor);
        let mut periods = Vec::new();
        let mut unreachable_pairs = 0;
        let sp = scenario.seed_period.max(1);
        for (pi, start) in (0..epochs.len()).step_by(sp).enumerate() {
            let range = start..(start + sp).min(epochs.len());
            let per_epoch: Vec<Vec<FlowSet>> = epochs[range.clone()]
                .iter()
                .map(|e| {
                    let ends = match scenario.flow_universe {
                        FlowUniverse::All => all.clone(),
                        FlowUniverse::Access => e.access.clone(),
                    };
                    let r = flow_sets_between(&e.dist, &ends, pi as u64);
                    unreachable_pairs += r.unreachable_pairs;
                    r.sets
                })
                .collect();
            let refs: Vec<&[FlowSet]> = per_epoch.iter().map(Vec::as_slice).collect();
            let flow_sets = if refs.len() == 1 {
                per_epoch.into_iter().next().unwrap()
            } else {
                union_flow_sets(&refs, pi as u64)
            };
            let seeds = forge.build(&flow_sets)?;
            periods.push(PeriodPlan {
                index: pi as u64,
                epochs: range,
                flow_sets,
                seeds,
            });
        }
        Ok(Self {
            n_sats,
            stations,
            epochs,
            periods,
            unreachable_pairs,
            seed_searches: forge.searches,
            seed_reuses: forge.reuses,
        })
    }

    /// Largest modulus over all periods and satellites.
    pub fn max_h(&self) -> u64 {
        self.periods
            .iter()
            .flat_map(|p| p.seeds.iter().map(|s| s.h))
            .max()
            .unwrap_or(1)
    }

    /// Mean predicted flow-set size over satellites and periods.
    pub fn mean_flow_set_size(&self) -> f64 {
        let (sum, n) = self
            .periods
            .iter()
            .flat_map(|p| p.flow_sets.iter())
            .fold((0usize, 0usize), |(s, n), f| (s + f.flows.len(), n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }
}

/// Pooled measurement key: satellite, flow, egress port.
pub type CountKey = (SatId, FlowKey, Port);

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub memory_bytes: usize,
    pub metrics: MetricSet<f64>,
    pub saturations: u64,
    pub prediction_misses: u64,
    /// Filled when the run retains maps.
    pub estimates: Option<BTreeMap<CountKey, u64>>,
}

/// Results for one measurement period.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u64,
    pub t_s: f64,
    pub packets_injected: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub reroutes: u64,
    pub local_units: f64,
    /// CS nodes whose seed upload was lost this period.
    pub control_losses: u64,
    pub schemes: Vec<SchemeReport>,
    pub truth: Option<BTreeMap<CountKey, u64>>,
    /// CS readbacks and seeds, when retained.
    pub readbacks: Option<Vec<crate::sketch::Readback>>,
    pub traffic: Option<Vec<(f64, SatelliteMatrix)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EventTime(f64);

impl Eq for EventTime {}
impl PartialOrd for EventTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for EventTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A packet heading to `at`, having left `from` over the edge `(from, at)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlight {
    pub id: u64,
    pub flow: FlowKey,
    pub units: u64,
    pub from: Option<SatId>,
    pub at: SatId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    t: EventTime,
    id: u64,
}

/// Moves packets caught on links that vanished back to the node that sent them.
/// Returns how many were moved.
pub fn reroute_on_change(
    prev: &TopologySnapshot,
    next: &TopologySnapshot,
    in_flight: &mut [InFlight],
) -> usize {
    let mut moved = 0;
    for p in in_flight.iter_mut() {
        if let Some(u) = p.from {
            if prev.has_edge(u, p.at) && !next.has_edge(u, p.at) {
                p.at = u;
                p.from = None;
                moved += 1;
            }
        }
    }
    moved
}

/// Per-(node, flow) rotation over equal-cost successors.
#[derive(Debug, Default, Clone)]
pub struct Cursors(HashMap<(SatId, FlowKey), usize>);

impl Cursors {
    pub fn pick(&mut self, node: SatId, flow: FlowKey, succ: &[SatId]) -> SatId {
        let c = self.0.entry((node, flow)).or_default();
        let v = succ[*c % succ.len()];
        *c = (*c + 1) % succ.len();
        v
    }
}

/// Full path of one packet; errors if the destination is unreachable.
pub fn forward_packet(
    plan: &EpochPlan,
    flow: FlowKey,
    cursors: &mut Cursors,
) -> Result<Vec<SatId>, crate::flows::FlowError> {
    let mut path = vec![flow.src];
    let mut at = flow.src;
    while at != flow.dst {
        let succ = ecmp_successors(&plan.adjacency, &plan.dist, at, flow.dst);
        if succ.is_empty() {
            return Err(crate::flows::FlowError::Unreachable {
                src: flow.src,
                dst: flow.dst,
            });
        }
        at = cursors.pick(at, flow, &succ);
        path.push(at);
    }
    Ok(path)
}

enum Counter {
    Cs(Vec<CsNode>),
    Ported(Vec<PortedBaseline>),
}

struct SchemeState {
    scheme: Scheme,
    memory: usize,
    counter: Counter,
}

/// Options that change what a run keeps, not what it computes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub retain_maps: bool,
}

/// Executes a scenario against a prebuilt plan.
pub fn run_with_plan(
    scenario: &Scenario,
    plan: &Plan,
    opts: RunOptions,
) -> Result<Vec<EpochReport>, SimError> {
    let n = plan.n_sats;
    let params = scenario.traffic_params();
    let fl_expected = if scenario.fl_expected_flows > 0 {
        scenario.fl_expected_flows
    } else {
        ((plan.mean_flow_set_size() / 4.0).ceil() as usize).max(1)
    };
    let bparams = scenario.baseline_params(fl_expected);
    let mut states: Vec<SchemeState> = scenario
        .schemes()
        .into_iter()
        .map(|s| -> Result<SchemeState, SimError> {
            let memory = scenario.memory_for(s);
            let counter = match s {
                Scheme::Cs => Counter::Cs(
                    (0..n as SatId)
                        .map(|k| CsNode::new(k, memory, scenario.cs_lanes))
                        .collect::<Result<_, _>>()?,
                ),
                _ => Counter::Ported(
                    (0..n)
                        .map(|_| PortedBaseline::new(s, memory, &bparams))
                        .collect(),
                ),
            };
            Ok(SchemeState {
                scheme: s,
                memory,
                counter,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut packetizer = Packetizer::new();
    let mut cursors = Cursors::default();
    let mut in_flight: Vec<(f64, InFlight)> = Vec::new();
    let mut next_packet_id = 0u64;
    let mut reports = Vec::with_capacity(plan.periods.len());

    for period in &plan.periods {
        let mut control_losses = 0u64;
        for st in &mut states {
            match &mut st.counter {
                Counter::Cs(nodes) => {
                    let mut loss = derived_rng(scenario.rng_seed, RNG_CONTROL, period.index);
                    for (node, seed) in nodes.iter_mut().zip(&period.seeds) {
                        let lost = scenario.control_loss_prob > 0.0
                            && loss.gen_bool(scenario.control_loss_prob);
                        if lost {
                            control_losses += 1;
                            node.install_seed(SeedTable::sentinel(seed.sat_id, seed.epoch))?;
                        } else {
                            node.install_seed(*seed)?;
                        }
                    }
                }
                Counter::Ported(b) => b.iter_mut().for_each(PortedBaseline::clear),
            }
        }
        let mut truth: BTreeMap<CountKey, u64> = BTreeMap::new();
        let mut unpredicted: Vec<BTreeSet<FlowKey>> = vec![BTreeSet::new(); n];
        let mut misses = 0u64;
        let (mut injected, mut delivered, mut dropped, mut reroutes) = (0u64, 0u64, 0u64, 0u64);
        let mut local_units = 0.0;
        let mut traffic_log = Vec::new();

        for ei in period.epochs.clone() {
            let ep = &plan.epochs[ei];
            let t_end = ep.t_s + scenario.epoch_s;

            if ei > 0 && !in_flight.is_empty() {
                let mut pk: Vec<InFlight> = in_flight.iter().map(|x| x.1).collect();
                reroutes +=
                    reroute_on_change(&plan.epochs[ei - 1].snapshot, &ep.snapshot, &mut pk) as u64;
                for (slot, p) in in_flight.iter_mut().zip(pk) {
                    slot.1 = p;
                }
            }

            let mut rng = derived_rng(scenario.rng_seed, RNG_TRAFFIC, ep.index);
            let tm = traffic_matrix(&params, &plan.stations, ep.t_s, &mut rng);
            let sm = to_satellite_matrix(&tm, &ep.access)?;
            local_units += sm.local;
            let mut shuffle = derived_rng(scenario.rng_seed, RNG_SHUFFLE, ep.index);
            let packets = packetizer.packetize(&sm.flows, ep.t_s, &mut shuffle);
            if opts.retain_maps {
                traffic_log.push((ep.t_s, sm));
            }

            let mut queue: BinaryHeap<std::cmp::Reverse<Event>> = BinaryHeap::new();
            let mut live: HashMap<u64, InFlight> = HashMap::new();
            for (t, p) in in_flight.drain(..) {
                queue.push(std::cmp::Reverse(Event {
                    t: EventTime(t),
                    id: p.id,
                }));
                live.insert(p.id, p);
            }
            for pkt in &packets {
                let id = next_packet_id;
                next_packet_id += 1;
                injected += 1;
                let flow = FlowKey {
                    src: pkt.src,
                    dst: pkt.dst,
                };
                live.insert(
                    id,
                    InFlight {
                        id,
                        flow,
                        units: packet_units(pkt.size_bytes),
                        from: None,
                        at: pkt.src,
                    },
                );
                queue.push(std::cmp::Reverse(Event {
                    t: EventTime(ep.t_s),
                    id,
                }));
            }

            while let Some(std::cmp::Reverse(ev)) = queue.pop() {
                let t = ev.t.0;
                let mut p = live.remove(&ev.id).expect("queued packet is live");
                if t >= t_end {
                    in_flight.push((t, p));
                    continue;
                }
                if p.at == p.flow.dst {
                    delivered += 1;
                    continue;
                }
                let succ = ecmp_successors(&ep.adjacency, &ep.dist, p.at, p.flow.dst);
                if succ.is_empty() {
                    dropped += 1;
                    continue;
                }
                let next = cursors.pick(p.at, p.flow, &succ);
                let port = ep
                    .snapshot
                    .port_to(p.at, next)
                    .ok_or_else(|| SimError::Invariant {
                        epoch: ep.index,
                        detail: format!("edge {}-{} has no port", p.at, next),
                    })?;
                let node = p.at;
                *truth.entry((node, p.flow, port)).or_default() += p.units;
                if !period.flow_sets[node as usize].contains(&p.flow) {
                    misses += 1;
                    unpredicted[node as usize].insert(p.flow);
                }
                let rec = PacketRecord {
                    src: p.flow.src,
                    dst: p.flow.dst,
                    size_bytes: p.units * crate::sketch::UNIT_BYTES,
                    out_port: port,
                    t_s: t,
                };
                for st in &mut states {
                    match &mut st.counter {
                        Counter::Cs(nodes) => {
                            let cs = &mut nodes[node as usize];
                            if cs.active_seed().map(|s| s.epoch) != Some(period.index) {
                                return Err(SimError::Invariant {
                                    epoch: ep.index,
                                    detail: format!("node {node} counting under a foreign seed"),
                                });
                            }
                            cs.update(&rec)?;
                        }
                        Counter::Ported(b) => b[node as usize].update(p.flow.id(), port, p.units),
                    }
                }
                p.from = Some(node);
                p.at = next;
                live.insert(p.id, p);
                queue.push(std::cmp::Reverse(Event {
                    t: EventTime(t + scenario.hop_delay_s),
                    id: ev.id,
                }));
            }
        }

        let mut scheme_reports = Vec::with_capacity(states.len());
        let mut readbacks = None;
        for st in &states {
            let est = estimates(st, &period.flow_sets, &unpredicted);
            let metrics = evaluate_with::<f64, _>(&truth, &est, scenario.re_aggregate);
            let saturations = match &st.counter {
                Counter::Cs(nodes) => {
                    if opts.retain_maps {
                        readbacks = Some(nodes.iter().map(CsNode::readback).collect());
                    }
                    nodes.iter().map(CsNode::saturations).sum()
                }
                Counter::Ported(_) => 0,
            };
            scheme_reports.push(SchemeReport {
                scheme: st.scheme,
                memory_bytes: st.memory,
                metrics,
                saturations,
                prediction_misses: misses,
                estimates: opts.retain_maps.then_some(est),
            });
        }
        reports.push(EpochReport {
            epoch: period.index,
            t_s: plan.epochs[period.epochs.start].t_s,
            packets_injected: injected,
            packets_delivered: delivered,
            packets_dropped: dropped,
            reroutes,
            local_units,
            control_losses,
            schemes: scheme_reports,
            truth: opts.retain_maps.then_some(truth),
            readbacks,
            traffic: opts.retain_maps.then_some(traffic_log),
        });
    }
    Ok(reports)
}

/// Nonzero estimates over each node's predicted flows plus any it saw unpredicted.
fn estimates(
    st: &SchemeState,
    flow_sets: &[FlowSet],
    unpredicted: &[BTreeSet<FlowKey>],
) -> BTreeMap<CountKey, u64> {
    let per_node: Vec<Vec<(CountKey, u64)>> = (0..flow_sets.len())
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            let flows = flow_sets[k].flows.iter().chain(unpredicted[k].iter());
            match &st.counter {
                Counter::Cs(nodes) => {
                    let node = &nodes[k];
                    for f in flows {
                        let raw = node.raw_for(f).unwrap_or(0);
                        if raw == 0 {
                            continue;
                        }
                        let c = PortAggCounter { raw };
                        for p in 1..=NUM_PORTS as Port {
                            let v = c.extract(p).expect("valid port") as u64;
                            if v > 0 {
                                out.push(((k as SatId, *f, p), v));
                            }
                        }
                    }
                }
                Counter::Ported(b) => {
                    let sk = &b[k];
                    for f in flows {
                        let id = f.id();
                        for p in 1..=NUM_PORTS as Port {
                            let v = sk.query(id, p);
                            if v > 0 {
                                out.push(((k as SatId, *f, p), v));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    per_node.into_iter().flatten().collect()
}

/// Builds the plan and runs the scenario once.
pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<Vec<EpochReport>, SimError> {
    let plan = Plan::build(scenario)?;
    run_with_plan(scenario, &plan, opts)
}

/// Mean of a per-epoch metric over the finite values.
pub fn mean_metric(
    reports: &[EpochReport],
    scheme: Scheme,
    f: impl Fn(&MetricSet<f64>) -> f64,
) -> f64 {
    let v: Vec<f64> = reports
        .iter()
        .flat_map(|r| {
            r.schemes
                .iter()
                .filter(|s| s.scheme == scheme)
                .map(|s| f(&s.metrics))
        })
        .filter(|x| x.is_finite())
        .collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
