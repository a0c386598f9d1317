//! On-board measurement node with port-aggregated counters.
//!
//! Each 64-bit counter holds four 16-bit per-port subfields; port `p` lives in
//! bits `[16(p-1), 16p)`. A flow's slot is `(id mod h) mod len` where `len` is
//! the number of counters the memory budget allows, capped at `h`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::flows::FlowKey;
use crate::seeds::{cantor_pair, SeedTable};
use crate::topology::{Port, SatId, NUM_PORTS};

pub const UNIT_BYTES: u64 = 64;
pub const SUBFIELD_BITS: u32 = 16;
pub const SUBFIELD_MAX: u64 = (1 << SUBFIELD_BITS) - 1;
pub const COUNTER_BYTES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SketchError {
    #[error("no seed installed")]
    NoActiveSeed,
    #[error("seed for epoch {offered} is not newer than active epoch {active}")]
    StaleSeed { active: u64, offered: u64 },
    #[error("port {0} outside 1..=4")]
    InvalidPort(Port),
    #[error("need at least one parser lane per port")]
    ZeroLanes,
    #[error("memory budget of {0} bytes holds no counter")]
    BudgetTooSmall(usize),
    #[error("seed for satellite {seed} offered to node {node}")]
    WrongSatellite { node: SatId, seed: SatId },
}

fn check_port(port: Port) -> Result<usize, SketchError> {
    if (1..=NUM_PORTS as Port).contains(&port) {
        Ok(port as usize - 1)
    } else {
        Err(SketchError::InvalidPort(port))
    }
}

/// Four saturating 16-bit counters packed in one word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortAggCounter {
    pub raw: u64,
}

impl PortAggCounter {
    pub fn extract(&self, port: Port) -> Result<u16, SketchError> {
        let i = check_port(port)?;
        Ok(((self.raw >> (SUBFIELD_BITS * i as u32)) & SUBFIELD_MAX) as u16)
    }

    /// Adds `units · 2^{16(p-1)}`, clamping the subfield at 2^16 − 1.
    /// Returns true when the add saturated.
    pub fn add(&mut self, port: Port, units: u64) -> Result<bool, SketchError> {
        let shift = SUBFIELD_BITS * check_port(port)? as u32;
        let cur = (self.raw >> shift) & SUBFIELD_MAX;
        let room = SUBFIELD_MAX - cur;
        let (inc, saturated) = if units > room {
            (room, true)
        } else {
            (units, false)
        };
        self.raw += inc << shift;
        Ok(saturated)
    }
}

/// A packet leaving a satellite on `out_port`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub src: SatId,
    pub dst: SatId,
    pub size_bytes: u64,
    pub out_port: Port,
    pub t_s: f64,
}

/// Packet size in 64-byte units, rounded up.
pub fn packet_units(size_bytes: u64) -> u64 {
    size_bytes.div_ceil(UNIT_BYTES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Counted,
    /// Counted, but the subfield saturated.
    Overflowed,
    /// No predicted flows on this node; the packet went to the overflow counter.
    Unknown,
}

/// Counter dump for one node and one measurement period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Readback {
    pub sat_id: SatId,
    /// `None` before the first seed.
    pub epoch: Option<u64>,
    pub h: u64,
    pub counters: Vec<u64>,
    /// Bit `p - 1` set when port `p` saturated in that slot.
    pub saturation_flags: Vec<u8>,
    pub overflow: u64,
}

impl Readback {
    pub fn slot_of(&self, id: u64) -> Option<usize> {
        if self.counters.is_empty() {
            return None;
        }
        Some(((id % self.h) % self.counters.len() as u64) as usize)
    }

    pub fn query(&self, flow: &FlowKey, port: Port) -> Result<u16, SketchError> {
        let slot = self.slot_of(flow.id()).ok_or(SketchError::NoActiveSeed)?;
        PortAggCounter {
            raw: self.counters[slot],
        }
        .extract(port)
    }

    pub fn is_zero(&self) -> bool {
        self.counters.iter().all(|&c| c == 0) && self.overflow == 0
    }

    /// Rows `epoch,sat_id,slot,raw,saturation_flags`, nonzero slots only.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        let epoch = self.epoch.map(|e| e.to_string()).unwrap_or_default();
        for (slot, (&raw, &flags)) in self.counters.iter().zip(&self.saturation_flags).enumerate() {
            if raw != 0 || flags != 0 {
                writeln!(out, "{epoch},{},{slot},{raw},{flags}", self.sat_id).unwrap();
            }
        }
        out
    }
}

pub const READBACK_CSV_HEADER: &str = "epoch,sat_id,slot,raw,saturation_flags";

#[derive(Debug, Clone)]
pub struct CsNode {
    pub sat_id: SatId,
    budget_slots: usize,
    lanes_per_port: usize,
    rr_cursor: [usize; NUM_PORTS],
    active: Option<SeedTable>,
    counters: Vec<PortAggCounter>,
    saturation_flags: Vec<u8>,
    overflow_counter: PortAggCounter,
    previous: Option<Readback>,
    saturations: u64,
}

impl CsNode {
    pub fn new(
        sat_id: SatId,
        memory_budget_bytes: usize,
        lanes_per_port: usize,
    ) -> Result<Self, SketchError> {
        if lanes_per_port == 0 {
            return Err(SketchError::ZeroLanes);
        }
        let budget_slots = memory_budget_bytes / COUNTER_BYTES;
        if budget_slots == 0 {
            return Err(SketchError::BudgetTooSmall(memory_budget_bytes));
        }
        Ok(Self {
            sat_id,
            budget_slots,
            lanes_per_port,
            rr_cursor: [0; NUM_PORTS],
            active: None,
            counters: vec![],
            saturation_flags: vec![],
            overflow_counter: PortAggCounter::default(),
            previous: None,
            saturations: 0,
        })
    }

    pub fn active_seed(&self) -> Option<&SeedTable> {
        self.active.as_ref()
    }

    pub fn slots(&self) -> usize {
        self.counters.len()
    }

    /// Bytes of counter memory in use for the active seed.
    pub fn memory_bytes(&self) -> usize {
        self.counters.len() * COUNTER_BYTES
    }

    /// Saturating adds since the last install.
    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn previous_readback(&self) -> Option<&Readback> {
        self.previous.as_ref()
    }

    /// Next parser lane for `port`, cycling `0..M`.
    pub fn assign_parser(&mut self, port: Port) -> Result<usize, SketchError> {
        let i = check_port(port)?;
        let lane = self.rr_cursor[i];
        self.rr_cursor[i] = (lane + 1) % self.lanes_per_port;
        Ok(lane)
    }

    /// Current counters as a readback record.
    pub fn readback(&self) -> Readback {
        Readback {
            sat_id: self.sat_id,
            epoch: self.active.map(|s| s.epoch),
            h: self.active.map(|s| s.h).unwrap_or(1),
            counters: self.counters.iter().map(|c| c.raw).collect(),
            saturation_flags: self.saturation_flags.clone(),
            overflow: self.overflow_counter.raw,
        }
    }

    /// Activates `seed`, clears the counters and returns the previous period.
    /// The returned record is also kept until the next install.
    pub fn install_seed(&mut self, seed: SeedTable) -> Result<Readback, SketchError> {
        if seed.sat_id != self.sat_id {
            return Err(SketchError::WrongSatellite {
                node: self.sat_id,
                seed: seed.sat_id,
            });
        }
        if let Some(active) = self.active {
            if seed.epoch <= active.epoch {
                return Err(SketchError::StaleSeed {
                    active: active.epoch,
                    offered: seed.epoch,
                });
            }
        }
        let out = self.readback();
        let len = (seed.h as usize).min(self.budget_slots).max(1);
        self.counters = vec![PortAggCounter::default(); len];
        self.saturation_flags = vec![0; len];
        self.overflow_counter = PortAggCounter::default();
        self.saturations = 0;
        self.active = Some(seed);
        self.previous = Some(out.clone());
        Ok(out)
    }

    pub fn update(&mut self, pkt: &PacketRecord) -> Result<UpdateOutcome, SketchError> {
        let seed = self.active.ok_or(SketchError::NoActiveSeed)?;
        self.assign_parser(pkt.out_port)?;
        let units = packet_units(pkt.size_bytes);
        if seed.is_sentinel() {
            if self.overflow_counter.add(pkt.out_port, units)? {
                self.saturations += 1;
            }
            return Ok(UpdateOutcome::Unknown);
        }
        let t = cantor_pair(pkt.src as u64, pkt.dst as u64).expect("u32 pair fits in u64");
        let slot = ((t % seed.h) % self.counters.len() as u64) as usize;
        if self.counters[slot].add(pkt.out_port, units)? {
            self.saturation_flags[slot] |= 1 << (pkt.out_port - 1);
            self.saturations += 1;
            Ok(UpdateOutcome::Overflowed)
        } else {
            Ok(UpdateOutcome::Counted)
        }
    }

    pub fn query(&self, flow: &FlowKey, port: Port) -> Result<u16, SketchError> {
        let seed = self.active.ok_or(SketchError::NoActiveSeed)?;
        check_port(port)?;
        if seed.is_sentinel() {
            return Ok(0);
        }
        let slot = ((flow.id() % seed.h) % self.counters.len() as u64) as usize;
        self.counters[slot].extract(port)
    }

    /// Raw word of the slot `flow` maps to.
    pub fn raw_for(&self, flow: &FlowKey) -> Result<u64, SketchError> {
        let seed = self.active.ok_or(SketchError::NoActiveSeed)?;
        if seed.is_sentinel() {
            return Ok(0);
        }
        Ok(self.counters[((flow.id() % seed.h) % self.counters.len() as u64) as usize].raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(epoch: u64, h: u64, n: usize) -> SeedTable {
        SeedTable {
            sat_id: 0,
            epoch,
            h,
            n,
            checksum: 0,
        }
    }

    fn pkt(src: SatId, dst: SatId, port: Port) -> PacketRecord {
        PacketRecord {
            src,
            dst,
            size_bytes: 64,
            out_port: port,
            t_s: 0.0,
        }
    }

    #[test]
    fn units_round_up() {
        assert_eq!(packet_units(120), 2);
        assert_eq!(packet_units(64), 1);
        assert_eq!(packet_units(65), 2);
        assert_eq!(packet_units(1), 1);
    }

    #[test]
    fn port_three_unit_sets_bit_32() {
        let mut c = PortAggCounter::default();
        assert!(!c.add(3, 1).unwrap());
        assert_eq!(c.raw, 1 << 32);
        assert_eq!(c.extract(3).unwrap(), 1);
    }

    #[test]
    fn saturation_does_not_carry() {
        let mut c = PortAggCounter::default();
        c.add(1, SUBFIELD_MAX).unwrap();
        c.add(2, 7).unwrap();
        assert!(c.add(1, 1).unwrap());
        assert_eq!(c.extract(1).unwrap(), u16::MAX);
        assert_eq!(c.extract(2).unwrap(), 7);
        assert_eq!(c.extract(3).unwrap(), 0);
        assert_eq!(c.extract(4).unwrap(), 0);
        assert_eq!(c.extract(5), Err(SketchError::InvalidPort(5)));
    }

    #[test]
    fn round_robin_lanes() {
        let mut n = CsNode::new(0, 64, 3).unwrap();
        let lanes: Vec<_> = (0..4).map(|_| n.assign_parser(1).unwrap()).collect();
        assert_eq!(lanes, vec![0, 1, 2, 0]);
        assert_eq!(n.assign_parser(2).unwrap(), 0);
        let mut one = CsNode::new(0, 64, 1).unwrap();
        assert!((0..5).all(|_| one.assign_parser(4).unwrap() == 0));
        assert_eq!(CsNode::new(0, 64, 0).err(), Some(SketchError::ZeroLanes));
    }

    #[test]
    fn update_and_query() {
        let mut n = CsNode::new(0, 1024, 2).unwrap();
        assert_eq!(n.update(&pkt(0, 1, 1)), Err(SketchError::NoActiveSeed));
        n.install_seed(seed(0, 5, 3)).unwrap();
        for _ in 0..4 {
            assert_eq!(n.update(&pkt(1, 2, 3)).unwrap(), UpdateOutcome::Counted);
        }
        let f = FlowKey::new(1, 2).unwrap();
        assert_eq!(n.query(&f, 3).unwrap(), 4);
        assert_eq!(n.query(&f, 1).unwrap(), 0);
        assert_eq!(n.query(&FlowKey::new(0, 1).unwrap(), 3).unwrap(), 0);
        assert_eq!(n.slots(), 5);
    }

    #[test]
    fn install_swaps_and_clears() {
        let mut n = CsNode::new(0, 1024, 1).unwrap();
        n.install_seed(seed(0, 4, 2)).unwrap();
        n.update(&pkt(0, 1, 2)).unwrap();
        let before = n.readback();
        let rb = n.install_seed(seed(1, 4, 2)).unwrap();
        assert_eq!(rb, before);
        assert_eq!(rb.epoch, Some(0));
        assert_eq!(rb.query(&FlowKey::new(0, 1).unwrap(), 2).unwrap(), 1);
        assert!(n.readback().is_zero());
        assert_eq!(n.previous_readback(), Some(&rb));
        assert_eq!(
            n.install_seed(seed(1, 4, 2)),
            Err(SketchError::StaleSeed {
                active: 1,
                offered: 1
            })
        );
        assert!(n.install_seed(seed(2, 4, 2)).unwrap().is_zero());
    }

    #[test]
    fn sentinel_routes_to_overflow() {
        let mut n = CsNode::new(0, 64, 1).unwrap();
        n.install_seed(SeedTable::sentinel(0, 0)).unwrap();
        assert_eq!(n.update(&pkt(3, 4, 1)).unwrap(), UpdateOutcome::Unknown);
        assert_eq!(n.readback().overflow, 1);
        assert_eq!(n.query(&FlowKey::new(3, 4).unwrap(), 1).unwrap(), 0);
    }

    #[test]
    fn constrained_memory_folds_slots() {
        // 16 bytes = 2 counters; h = 5 folds residues mod 2.
        let mut n = CsNode::new(0, 16, 1).unwrap();
        n.install_seed(seed(0, 5, 5)).unwrap();
        assert_eq!(n.slots(), 2);
        let a = FlowKey::new(0, 1).unwrap(); // id 2
        let b = FlowKey::new(1, 1 + 1).unwrap(); // id 8, 8 mod 5 = 3
        n.update(&pkt(0, 1, 1)).unwrap();
        assert_eq!(
            n.query(&b, 1).unwrap(),
            u16::from((a.id() % 5) % 2 == (b.id() % 5) % 2)
        );
    }

    #[test]
    fn readback_csv_lists_nonzero_slots() {
        let mut n = CsNode::new(7, 1024, 1).unwrap();
        n.install_seed(SeedTable {
            sat_id: 7,
            ..seed(3, 4, 2)
        })
        .unwrap();
        n.update(&PacketRecord {
            src: 0,
            dst: 1,
            size_bytes: 128,
            out_port: 1,
            t_s: 0.0,
        })
        .unwrap();
        assert_eq!(n.readback().to_csv_rows(), "3,7,2,2,0\n");
    }
}
