//! Minimum-hop routing and per-satellite flow sets.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::seeds::{cantor_pair, FlowId};
use crate::topology::{SatId, TopologySnapshot};

pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("flow source equals destination ({0})")]
    SelfFlow(SatId),
    #[error("{dst} is unreachable from {src}")]
    Unreachable { src: SatId, dst: SatId },
    #[error("node {node} outside graph of {n} nodes")]
    OutOfRange { node: SatId, n: usize },
}

/// Directed satellite pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src: SatId,
    pub dst: SatId,
}

impl FlowKey {
    pub fn new(src: SatId, dst: SatId) -> Result<Self, FlowError> {
        if src == dst {
            return Err(FlowError::SelfFlow(src));
        }
        Ok(Self { src, dst })
    }

    /// Cantor id; 32-bit satellite ids never overflow 64 bits.
    pub fn id(&self) -> FlowId {
        cantor_pair(self.src as u64, self.dst as u64).expect("u32 pair fits in u64")
    }
}

/// Flows whose minimum-hop DAG passes a satellite in one epoch, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSet {
    pub sat_id: SatId,
    pub epoch: u64,
    pub flows: Vec<FlowKey>,
}

impl FlowSet {
    pub fn contains(&self, f: &FlowKey) -> bool {
        let id = f.id();
        self.flows.binary_search_by_key(&id, FlowKey::id).is_ok()
    }
}

/// Hop distances from `src`; [`UNREACHABLE`] where disconnected.
pub fn bfs_distances(adj: &[Vec<SatId>], src: SatId) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; adj.len()];
    let mut q = VecDeque::new();
    dist[src as usize] = 0;
    q.push_back(src);
    while let Some(u) = q.pop_front() {
        let du = dist[u as usize];
        for &v in &adj[u as usize] {
            if dist[v as usize] == UNREACHABLE {
                dist[v as usize] = du + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs hop distances of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn from_adjacency(adj: &[Vec<SatId>]) -> Self {
        let n = adj.len();
        let rows: Vec<Vec<u32>> = (0..n as SatId)
            .into_par_iter()
            .map(|s| bfs_distances(adj, s))
            .collect();
        Self {
            n,
            d: rows.concat(),
        }
    }

    pub fn new(g: &TopologySnapshot) -> Self {
        Self::from_adjacency(&g.adjacency())
    }

    pub fn get(&self, a: SatId, b: SatId) -> u32 {
        self.d[a as usize * self.n + b as usize]
    }

    /// True when `k` lies on some minimum-hop path from `u` to `v`.
    pub fn on_dag(&self, u: SatId, v: SatId, k: SatId) -> bool {
        let duv = self.get(u, v);
        let a = self.get(u, k);
        let b = self.get(k, v);
        duv != UNREACHABLE && a != UNREACHABLE && b != UNREACHABLE && a + b == duv
    }
}

/// Neighbors of `node` one hop closer to `dst`, ascending.
pub fn ecmp_successors(
    adj: &[Vec<SatId>],
    dist: &DistanceMatrix,
    node: SatId,
    dst: SatId,
) -> Vec<SatId> {
    let d = dist.get(node, dst);
    if d == UNREACHABLE || d == 0 {
        return vec![];
    }
    adj[node as usize]
        .iter()
        .copied()
        .filter(|&v| dist.get(v, dst) == d - 1)
        .collect()
}

/// Union of all minimum-hop paths from `src` to `dst` as directed edges, sorted.
pub fn shortest_path_dag(
    g: &TopologySnapshot,
    src: SatId,
    dst: SatId,
) -> Result<Vec<(SatId, SatId)>, FlowError> {
    let n = g.n_nodes;
    for node in [src, dst] {
        if node as usize >= n {
            return Err(FlowError::OutOfRange { node, n });
        }
    }
    let adj = g.adjacency();
    let from_src = bfs_distances(&adj, src);
    let to_dst = bfs_distances(&adj, dst);
    let total = from_src[dst as usize];
    if total == UNREACHABLE {
        return Err(FlowError::Unreachable { src, dst });
    }
    let mut edges = Vec::new();
    for u in 0..n {
        if from_src[u] == UNREACHABLE || to_dst[u] == UNREACHABLE {
            continue;
        }
        for &v in &adj[u] {
            let v_to = to_dst[v as usize];
            if v_to != UNREACHABLE && from_src[u] + 1 + v_to == total {
                edges.push((u as SatId, v));
            }
        }
    }
    Ok(edges)
}

/// Flow sets plus the number of ordered pairs skipped as unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSetReport {
    pub sets: Vec<FlowSet>,
    pub unreachable_pairs: usize,
}

/// Flow sets over every ordered pair of satellites.
pub fn flow_sets(g: &TopologySnapshot, epoch: u64) -> FlowSetReport {
    let dist = DistanceMatrix::new(g);
    let nodes: Vec<SatId> = (0..g.n_nodes as SatId).collect();
    flow_sets_between(&dist, &nodes, epoch)
}

/// Flow sets over ordered pairs of distinct `endpoints`.
pub fn flow_sets_between(dist: &DistanceMatrix, endpoints: &[SatId], epoch: u64) -> FlowSetReport {
    let ends: Vec<SatId> = endpoints
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut pairs = Vec::new();
    let mut unreachable_pairs = 0;
    for &u in &ends {
        for &v in &ends {
            if u == v {
                continue;
            }
            if dist.get(u, v) == UNREACHABLE {
                unreachable_pairs += 1;
            } else {
                pairs.push(FlowKey { src: u, dst: v });
            }
        }
    }
    pairs.sort_by_key(FlowKey::id);
    let sets = (0..dist.n as SatId)
        .into_par_iter()
        .map(|k| FlowSet {
            sat_id: k,
            epoch,
            flows: pairs
                .iter()
                .copied()
                .filter(|f| dist.on_dag(f.src, f.dst, k))
                .collect(),
        })
        .collect();
    FlowSetReport {
        sets,
        unreachable_pairs,
    }
}

/// Per-satellite union of several flow sets, re-stamped with `epoch`.
pub fn union_flow_sets(groups: &[&[FlowSet]], epoch: u64) -> Vec<FlowSet> {
    let Some(first) = groups.first() else {
        return vec![];
    };
    (0..first.len())
        .map(|k| {
            let mut all: Vec<FlowKey> = groups
                .iter()
                .flat_map(|g| g[k].flows.iter().copied())
                .collect();
            all.sort_by_key(FlowKey::id);
            all.dedup();
            FlowSet {
                sat_id: first[k].sat_id,
                epoch,
                flows: all,
            }
        })
        .collect()
}

pub const FLOW_SET_CSV_HEADER: &str = "sat_id,src,dst,flow_id";

pub fn flow_sets_csv(sets: &[FlowSet]) -> String {
    let mut out = String::new();
    for s in sets {
        for f in &s.flows {
            writeln!(out, "{},{},{},{}", s.sat_id, f.src, f.dst, f.id()).unwrap();
        }
    }
    out
}
