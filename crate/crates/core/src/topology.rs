//! Constellation layout and per-epoch ISL topology.
//!
//! Satellite ids are `plane * sats_per_plane + index`. Ports are fixed by link
//! role: 1 = fore (index + 1), 2 = aft (index − 1), 3 = left plane (plane − 1),
//! 4 = right plane (plane + 1).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{
    elements_to_state, line_of_sight, normalize_angle, propagate, EarthModel, KeplerianElements,
    OrbitError, StateVector, Tle,
};

pub type SatId = u32;
pub type Port = u8;

pub const PORT_FORE: Port = 1;
pub const PORT_AFT: Port = 2;
pub const PORT_LEFT: Port = 3;
pub const PORT_RIGHT: Port = 4;
pub const NUM_PORTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
}

/// Walker shorthand for a single circular shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    #[serde(default)]
    pub name: String,
    pub planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    /// Walker phasing parameter F.
    #[serde(default)]
    pub phasing_offset: i64,
    /// 360 for Walker-delta, 180 for Walker-star (polar) shells.
    #[serde(default = "default_raan_spread")]
    pub raan_spread_deg: f64,
}

fn default_raan_spread() -> f64 {
    360.0
}

impl ConstellationSpec {
    pub fn total(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.planes == 0 || self.sats_per_plane == 0 {
            return Err(TopologyError::InvalidConstellation(
                "planes and sats_per_plane must be at least 1".into(),
            ));
        }
        if !(self.altitude_km > 0.0) {
            return Err(TopologyError::InvalidConstellation(
                "altitude must be positive".into(),
            ));
        }
        if !(self.raan_spread_deg > 0.0 && self.raan_spread_deg <= 360.0) {
            return Err(TopologyError::InvalidConstellation(
                "raan_spread_deg must be in (0, 360]".into(),
            ));
        }
        Ok(())
    }

    /// The 66-satellite polar reference shell.
    pub fn iridium() -> Self {
        Self {
            name: "iridium".into(),
            planes: 6,
            sats_per_plane: 11,
            altitude_km: 780.0,
            inclination_deg: 86.4,
            phasing_offset: 2,
            raan_spread_deg: 180.0,
        }
    }
}

/// Plane/slot structure of a constellation, in satellite-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub planes: usize,
    pub sats_per_plane: usize,
    pub plane_raan_deg: Vec<f64>,
    /// In-plane phase of slot 0 of each plane, in units of the in-plane spacing.
    pub plane_offset_slots: Vec<f64>,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn id(&self, plane: usize, index: usize) -> SatId {
        (plane * self.sats_per_plane + index % self.sats_per_plane) as SatId
    }

    pub fn plane_of(&self, id: SatId) -> usize {
        id as usize / self.sats_per_plane
    }

    pub fn index_of(&self, id: SatId) -> usize {
        id as usize % self.sats_per_plane
    }

    /// Unordered adjacent plane pairs `(j, j + 1 mod P)`.
    pub fn adjacent_plane_pairs(&self) -> Vec<(usize, usize)> {
        match self.planes {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            p => (0..p).map(|j| (j, (j + 1) % p)).collect(),
        }
    }

    /// The adjacent pair with the widest RAAN gap; ties go to the wrap-around pair.
    pub fn seam_pair(&self) -> Option<(usize, usize)> {
        let pairs = self.adjacent_plane_pairs();
        let mut best: Option<((usize, usize), f64)> = None;
        for (j, k) in pairs {
            let gap = (self.plane_raan_deg[k] - self.plane_raan_deg[j]).rem_euclid(360.0);
            let gap = if gap == 0.0 { 360.0 } else { gap };
            match best {
                Some((_, g)) if gap < g - 1e-9 => {}
                _ => best = Some(((j, k), gap)),
            }
        }
        best.map(|(p, _)| p)
    }

    /// Slot shift `c` such that `(j, i)` pairs with `(k, i + c)` for the adjacent pair `(j, k)`.
    pub fn pair_shift(&self, j: usize, k: usize) -> i64 {
        (self.plane_offset_slots[j] - self.plane_offset_slots[k]).round() as i64
    }

    /// Satellite in plane `k` corresponding to `(j, i)` across the adjacent pair `(j, k)`.
    pub fn corresponding(&self, j: usize, i: usize, k: usize) -> SatId {
        let s = self.sats_per_plane as i64;
        let c = self.pair_shift(j, k);
        self.id(k, (i as i64 + c).rem_euclid(s) as usize)
    }
}

/// Satellites with their initial elements in id order.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub name: String,
    pub layout: Layout,
    pub elements: Vec<KeplerianElements<f64>>,
}

impl Constellation {
    pub fn walker(
        spec: &ConstellationSpec,
        earth: &EarthModel<f64>,
    ) -> Result<Self, TopologyError> {
        spec.validate()?;
        let p = spec.planes;
        let s = spec.sats_per_plane;
        let total = spec.total() as f64;
        let a = earth.earth_radius_km + spec.altitude_km;
        let inc = spec.inclination_deg.to_radians();
        let mut elements = Vec::with_capacity(spec.total());
        let mut plane_raan_deg = Vec::with_capacity(p);
        let mut plane_offset_slots = Vec::with_capacity(p);
        for j in 0..p {
            let raan = j as f64 * spec.raan_spread_deg / p as f64;
            let phase_deg = j as f64 * spec.phasing_offset as f64 * 360.0 / total;
            plane_raan_deg.push(raan);
            plane_offset_slots.push(j as f64 * spec.phasing_offset as f64 / p as f64);
            for i in 0..s {
                let m = i as f64 * 360.0 / s as f64 + phase_deg;
                elements.push(KeplerianElements::new(
                    a,
                    0.0,
                    inc,
                    raan.to_radians(),
                    0.0,
                    m.to_radians(),
                    0.0,
                    earth,
                )?);
            }
        }
        Ok(Self {
            name: spec.name.clone(),
            layout: Layout {
                planes: p,
                sats_per_plane: s,
                plane_raan_deg,
                plane_offset_slots,
            },
            elements,
        })
    }

    /// Groups TLEs into planes by RAAN (gap tolerance in degrees) and orders
    /// each plane by argument of latitude. Every plane must hold the same count.
    pub fn from_tles(
        name: &str,
        tles: &[Tle],
        earth: &EarthModel<f64>,
        raan_tol_deg: f64,
    ) -> Result<Self, TopologyError> {
        if tles.is_empty() {
            return Err(TopologyError::InvalidConstellation("empty TLE set".into()));
        }
        let t_ref = tles
            .iter()
            .map(Tle::epoch_seconds_since_2000)
            .fold(f64::INFINITY, f64::min);
        let mut els = Vec::with_capacity(tles.len());
        for t in tles {
            let el = t
                .to_elements(earth, t.epoch_seconds_since_2000() - t_ref)
                .map_err(|e| TopologyError::InvalidConstellation(e.to_string()))?;
            els.push(el);
        }

        let mut order: Vec<usize> = (0..els.len()).collect();
        order.sort_by(|&x, &y| els[x].raan_rad.total_cmp(&els[y].raan_rad));
        let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
        for w in order.windows(2) {
            let gap = (els[w[1]].raan_rad - els[w[0]].raan_rad).to_degrees();
            if gap > raan_tol_deg {
                groups.push(vec![w[1]]);
            } else {
                groups.last_mut().unwrap().push(w[1]);
            }
        }
        if groups.len() > 1 {
            let first = els[groups[0][0]].raan_rad.to_degrees();
            let last = els[*groups.last().unwrap().last().unwrap()]
                .raan_rad
                .to_degrees();
            if first + 360.0 - last <= raan_tol_deg {
                let tail = groups.pop().unwrap();
                groups[0].splice(0..0, tail);
            }
        }
        let s = groups[0].len();
        if groups.iter().any(|g| g.len() != s) {
            return Err(TopologyError::InvalidConstellation(format!(
                "TLE planes have unequal sizes: {:?}",
                groups.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }

        let spacing = 360.0 / s as f64;
        let mut elements = Vec::with_capacity(els.len());
        let mut plane_raan_deg = Vec::new();
        let mut plane_offset_slots = Vec::new();
        for g in &mut groups {
            g.sort_by(|&x, &y| {
                els[x]
                    .mean_argument_of_latitude()
                    .total_cmp(&els[y].mean_argument_of_latitude())
            });
            plane_raan_deg.push(els[g[0]].raan_rad.to_degrees());
            plane_offset_slots.push(els[g[0]].mean_argument_of_latitude().to_degrees() / spacing);
            elements.extend(g.iter().map(|&k| els[k]));
        }
        Ok(Self {
            name: name.to_string(),
            layout: Layout {
                planes: groups.len(),
                sats_per_plane: s,
                plane_raan_deg,
                plane_offset_slots,
            },
            elements,
        })
    }

    pub fn initial_states(
        &self,
        earth: &EarthModel<f64>,
    ) -> Result<Vec<StateVector<f64>>, OrbitError> {
        self.elements
            .iter()
            .map(|e| elements_to_state(e, earth))
            .collect()
    }

    pub fn states_at(
        initial: &[StateVector<f64>],
        t_s: f64,
        earth: &EarthModel<f64>,
    ) -> Result<Vec<StateVector<f64>>, OrbitError> {
        initial
            .iter()
            .map(|s| {
                let mut out = propagate(s, t_s - s.t_s, earth)?;
                out.t_s = t_s;
                Ok(out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IslPolicy {
    pub max_terminals: usize,
    pub seam_enabled: bool,
    pub high_latitude_cutoff_deg: f64,
    /// Overrides the derived seam with explicit plane pairs.
    pub seam_pairs: Option<Vec<(usize, usize)>>,
}

impl Default for IslPolicy {
    fn default() -> Self {
        Self {
            max_terminals: 4,
            seam_enabled: true,
            high_latitude_cutoff_deg: 70.0,
            seam_pairs: None,
        }
    }
}

impl IslPolicy {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.max_terminals < 2 {
            return Err(TopologyError::InvalidConstellation(
                "max_terminals must be at least 2".into(),
            ));
        }
        if !(self.high_latitude_cutoff_deg > 0.0 && self.high_latitude_cutoff_deg <= 90.0) {
            return Err(TopologyError::InvalidConstellation(
                "high_latitude_cutoff_deg must be in (0, 90]".into(),
            ));
        }
        Ok(())
    }

    pub fn seam_plane_pairs(&self, layout: &Layout) -> Vec<(usize, usize)> {
        if !self.seam_enabled {
            return vec![];
        }
        match &self.seam_pairs {
            Some(p) => p.clone(),
            None => layout.seam_pair().into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Visible,
    IntraPlane,
    InterPlane,
}

/// One epoch of the network graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySnapshot {
    pub t_s: f64,
    pub n_nodes: usize,
    /// Undirected edges keyed `(low, high)`.
    pub edges: BTreeMap<(SatId, SatId), LinkKind>,
    /// `ports[node][p - 1]` is the neighbor on port `p`.
    pub ports: Vec<[Option<SatId>; NUM_PORTS]>,
    /// Mandated grid links dropped because they failed visibility.
    pub infeasible: Vec<(SatId, SatId)>,
}

fn key(a: SatId, b: SatId) -> (SatId, SatId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TopologySnapshot {
    pub fn empty(t_s: f64, n_nodes: usize) -> Self {
        Self {
            t_s,
            n_nodes,
            edges: BTreeMap::new(),
            ports: vec![[None; NUM_PORTS]; n_nodes],
            infeasible: vec![],
        }
    }

    pub fn has_edge(&self, a: SatId, b: SatId) -> bool {
        self.edges.contains_key(&key(a, b))
    }

    pub fn degree(&self, node: SatId) -> usize {
        self.adjacency()[node as usize].len()
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<SatId>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in self.edges.keys() {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    /// Egress port at `from` toward neighbor `to`.
    pub fn port_to(&self, from: SatId, to: SatId) -> Option<Port> {
        self.ports[from as usize]
            .iter()
            .position(|n| *n == Some(to))
            .map(|i| (i + 1) as Port)
    }

    /// One line per node: `id port:neighbor ...`.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (id, ports) in self.ports.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for (p, n) in ports.iter().enumerate() {
                if let Some(n) = n {
                    write!(out, " {}:{}", p + 1, n).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    /// Rows `t_s,node,a_0,...,a_{N-1}` of the 0/1 adjacency matrix.
    pub fn to_matrix_csv_rows(&self) -> String {
        let adj = self.adjacency();
        let mut out = String::new();
        for (i, nbrs) in adj.iter().enumerate() {
            write!(out, "{:.3},{}", self.t_s, i).unwrap();
            let mut row = vec![0u8; self.n_nodes];
            for &n in nbrs {
                row[n as usize] = 1;
            }
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// All satellite pairs with a clear line of sight.
pub fn visibility_graph(
    states: &[StateVector<f64>],
    earth: &EarthModel<f64>,
) -> Result<TopologySnapshot, OrbitError> {
    let t = states.first().map(|s| s.t_s).unwrap_or(0.0);
    let mut g = TopologySnapshot::empty(t, states.len());
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            if line_of_sight(&states[i], &states[j], earth)? {
                g.edges.insert((i as SatId, j as SatId), LinkKind::Visible);
            }
        }
    }
    Ok(g)
}

/// Reduces a visibility graph to the operational grid topology.
pub fn apply_isl_policy(
    gv: &TopologySnapshot,
    layout: &Layout,
    policy: &IslPolicy,
    states: &[StateVector<f64>],
) -> TopologySnapshot {
    let n = layout.total();
    debug_assert_eq!(gv.n_nodes, n);
    let mut ga = TopologySnapshot::empty(gv.t_s, n);
    let seams = policy.seam_plane_pairs(layout);
    let is_seam = |j: usize, k: usize| {
        seams
            .iter()
            .any(|&(a, b)| (a, b) == (j, k) || (b, a) == (j, k))
    };
    let high_lat =
        |id: SatId| states[id as usize].latitude_deg().abs() > policy.high_latitude_cutoff_deg;

    // Candidate links in priority order: intra-plane first.
    let mut candidates: Vec<(SatId, Port, SatId, Port, LinkKind)> = Vec::new();
    let s = layout.sats_per_plane;
    if s >= 2 {
        for j in 0..layout.planes {
            for i in 0..s {
                if s == 2 && i == 1 {
                    break;
                }
                let a = layout.id(j, i);
                let b = layout.id(j, i + 1);
                candidates.push((a, PORT_FORE, b, PORT_AFT, LinkKind::IntraPlane));
            }
        }
    }
    for (j, k) in layout.adjacent_plane_pairs() {
        if is_seam(j, k) {
            continue;
        }
        for i in 0..s {
            let a = layout.id(j, i);
            let b = layout.corresponding(j, i, k);
            if high_lat(a) || high_lat(b) {
                continue;
            }
            candidates.push((a, PORT_RIGHT, b, PORT_LEFT, LinkKind::InterPlane));
        }
    }

    let mut degree = vec![0usize; n];
    for (a, pa, b, pb, kind) in candidates {
        if a == b || ga.has_edge(a, b) {
            continue;
        }
        if !gv.has_edge(a, b) {
            ga.infeasible.push(key(a, b));
            continue;
        }
        let (ia, ib) = (a as usize, b as usize);
        if degree[ia] >= policy.max_terminals || degree[ib] >= policy.max_terminals {
            continue;
        }
        if ga.ports[ia][pa as usize - 1].is_some() || ga.ports[ib][pb as usize - 1].is_some() {
            continue;
        }
        ga.edges.insert(key(a, b), kind);
        ga.ports[ia][pa as usize - 1] = Some(b);
        ga.ports[ib][pb as usize - 1] = Some(a);
        degree[ia] += 1;
        degree[ib] += 1;
    }
    ga
}

/// Number of snapshots on the grid `t0, t0 + step, ...` strictly before `t0 + horizon`.
pub fn snapshot_count(horizon_s: f64, step_s: f64) -> Result<usize, TopologyError> {
    if !(step_s > 0.0) || !(horizon_s >= step_s) {
        return Err(TopologyError::InvalidTimeGrid(format!(
            "need step > 0 and horizon >= step (step {step_s}, horizon {horizon_s})"
        )));
    }
    Ok((horizon_s / step_s + 1e-9).floor() as usize)
}

/// Propagates every satellite and emits one operational snapshot per step.
pub fn snapshot_series(
    constellation: &Constellation,
    policy: &IslPolicy,
    earth: &EarthModel<f64>,
    t0_s: f64,
    horizon_s: f64,
    step_s: f64,
) -> Result<Vec<TopologySnapshot>, TopologyError> {
    policy.validate()?;
    let count = snapshot_count(horizon_s, step_s)?;
    let initial = constellation.initial_states(earth)?;
    (0..count)
        .map(|k| {
            let t = t0_s + k as f64 * step_s;
            let states = Constellation::states_at(&initial, t, earth)?;
            let gv = visibility_graph(&states, earth)?;
            Ok(apply_isl_policy(
                &gv,
                &constellation.layout,
                policy,
                &states,
            ))
        })
        .collect()
}

/// Normalized right ascension helper used by tests and config loading.
pub fn wrap_deg(x: f64) -> f64 {
    normalize_angle(x.to_radians()).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iridium() -> Constellation {
        Constellation::walker(&ConstellationSpec::iridium(), &EarthModel::default()).unwrap()
    }

    #[test]
    fn single_satellite_has_no_edges() {
        let spec = ConstellationSpec {
            planes: 1,
            sats_per_plane: 1,
            ..ConstellationSpec::iridium()
        };
        let c = Constellation::walker(&spec, &EarthModel::default()).unwrap();
        let states = c.initial_states(&EarthModel::default()).unwrap();
        assert!(visibility_graph(&states, &EarthModel::default())
            .unwrap()
            .edges
            .is_empty());
    }

    #[test]
    fn iridium_in_plane_neighbors_are_visible() {
        let e = EarthModel::default();
        let c = iridium();
        let states = c.initial_states(&e).unwrap();
        let gv = visibility_graph(&states, &e).unwrap();
        for j in 0..6 {
            for i in 0..11 {
                assert!(gv.has_edge(c.layout.id(j, i), c.layout.id(j, i + 1)));
            }
        }
    }

    #[test]
    fn iridium_seam_is_the_wrap_pair() {
        assert_eq!(iridium().layout.seam_pair(), Some((5, 0)));
    }

    #[test]
    fn delta_ties_pick_the_wrap_pair() {
        let spec = ConstellationSpec {
            raan_spread_deg: 360.0,
            ..ConstellationSpec::iridium()
        };
        let c = Constellation::walker(&spec, &EarthModel::default()).unwrap();
        assert_eq!(c.layout.seam_pair(), Some((5, 0)));
    }

    #[test]
    fn correspondence_is_a_bijection() {
        let spec = ConstellationSpec {
            planes: 7,
            sats_per_plane: 9,
            phasing_offset: 5,
            raan_spread_deg: 360.0,
            ..ConstellationSpec::iridium()
        };
        let c = Constellation::walker(&spec, &EarthModel::default()).unwrap();
        for (j, k) in c.layout.adjacent_plane_pairs() {
            let mut hit = vec![false; 9];
            for i in 0..9 {
                let b = c.layout.corresponding(j, i, k);
                assert_eq!(c.layout.plane_of(b), k);
                hit[c.layout.index_of(b)] = true;
            }
            assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn snapshot_grid_boundaries() {
        assert_eq!(snapshot_count(100.0, 1.0).unwrap(), 100);
        assert_eq!(snapshot_count(1.0, 1.0).unwrap(), 1);
        assert!(snapshot_count(0.5, 1.0).is_err());
        assert!(snapshot_count(10.0, 0.0).is_err());
    }

    #[test]
    fn adjacency_text_lists_ports() {
        let mut g = TopologySnapshot::empty(0.0, 2);
        g.edges.insert((0, 1), LinkKind::IntraPlane);
        g.ports[0][0] = Some(1);
        g.ports[1][1] = Some(0);
        assert_eq!(g.to_adjacency_text(), "0 1:1\n1 2:0\n");
        assert_eq!(g.to_matrix_csv_rows(), "0.000,0,0,1\n0.000,1,1,0\n");
        assert_eq!(g.port_to(1, 0), Some(PORT_AFT));
    }
}
