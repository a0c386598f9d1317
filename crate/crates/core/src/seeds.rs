//! Flow identifiers and per-satellite minimal perfect moduli.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::flows::FlowSet;
use crate::topology::SatId;

pub type FlowId = u64;

/// Default search cap: `h <= DEFAULT_CAP_FACTOR * n`.
pub const DEFAULT_CAP_FACTOR: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("cantor pairing of ({src}, {dst}) overflows 64 bits")]
    Overflow { src: u64, dst: u64 },
    #[error("empty id set")]
    EmptySet,
    #[error("duplicate flow id {0}")]
    DuplicateId(FlowId),
    #[error("no perfect modulus up to {cap} for {n} ids")]
    SeedSearchOverflow { n: usize, cap: u64 },
    #[error("malformed seed record on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// `(s + d)(s + d + 1) / 2 + d`, computed in 128 bits.
pub fn cantor_pair(src: u64, dst: u64) -> Result<FlowId, SeedError> {
    let s = src as u128 + dst as u128;
    let v = s * (s + 1) / 2 + dst as u128;
    u64::try_from(v).map_err(|_| SeedError::Overflow { src, dst })
}

fn triangular(w: u128) -> u128 {
    w * (w + 1) / 2
}

/// Inverse of [`cantor_pair`]; returns `(src, dst)`.
pub fn cantor_unpair(id: FlowId) -> (u64, u64) {
    let z = id as u128;
    // Float estimate, then exact integer correction.
    let mut w = (((8.0 * id as f64 + 1.0).sqrt() - 1.0) / 2.0).floor() as u128;
    while triangular(w) > z {
        w -= 1;
    }
    while triangular(w + 1) <= z {
        w += 1;
    }
    let dst = z - triangular(w);
    let src = w - dst;
    (src as u64, dst as u64)
}

/// Smallest `h >= |ids|` with pairwise distinct residues, searching up to `cap_factor * n`.
pub fn min_perfect_modulus_capped(ids: &[FlowId], cap_factor: u64) -> Result<u64, SeedError> {
    let n = ids.len();
    if n == 0 {
        return Err(SeedError::EmptySet);
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(SeedError::DuplicateId(w[0]));
    }
    let cap = (n as u64).saturating_mul(cap_factor.max(1));
    // stamp[r] == h marks residue r as taken while testing modulus h.
    let mut stamp = vec![0u64; cap as usize];
    'next: for h in n as u64..=cap {
        for &id in ids {
            let r = (id % h) as usize;
            if stamp[r] == h {
                continue 'next;
            }
            stamp[r] = h;
        }
        return Ok(h);
    }
    Err(SeedError::SeedSearchOverflow { n, cap })
}

pub fn min_perfect_modulus(ids: &[FlowId]) -> Result<u64, SeedError> {
    min_perfect_modulus_capped(ids, DEFAULT_CAP_FACTOR)
}

/// FNV-1a over the sorted ids, little-endian.
pub fn id_checksum(sorted_ids: &[FlowId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in sorted_ids {
        for b in id.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Hash configuration for one satellite and one measurement period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTable {
    pub sat_id: SatId,
    pub epoch: u64,
    /// Modulus; 1 for the empty-set sentinel.
    pub h: u64,
    pub n: usize,
    pub checksum: u64,
}

impl SeedTable {
    pub fn sentinel(sat_id: SatId, epoch: u64) -> Self {
        Self {
            sat_id,
            epoch,
            h: 1,
            n: 0,
            checksum: id_checksum(&[]),
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.n == 0
    }

    pub fn residue(&self, id: FlowId) -> u64 {
        id % self.h
    }
}

fn sorted_ids(set: &FlowSet) -> Vec<FlowId> {
    let mut ids: Vec<FlowId> = set.flows.iter().map(|f| f.id()).collect();
    ids.sort_unstable();
    ids
}

fn table_for(
    set: &FlowSet,
    ids: &[FlowId],
    cap_factor: u64,
    reuse: Option<u64>,
) -> Result<SeedTable, SeedError> {
    if ids.is_empty() {
        return Ok(SeedTable::sentinel(set.sat_id, set.epoch));
    }
    let h = match reuse {
        Some(h) => h,
        None => min_perfect_modulus_capped(ids, cap_factor)?,
    };
    Ok(SeedTable {
        sat_id: set.sat_id,
        epoch: set.epoch,
        h,
        n: ids.len(),
        checksum: id_checksum(ids),
    })
}

/// One table per flow set, computed independently.
pub fn build_seed_tables(
    flow_sets: &[FlowSet],
    cap_factor: u64,
) -> Result<Vec<SeedTable>, SeedError> {
    flow_sets
        .par_iter()
        .map(|s| table_for(s, &sorted_ids(s), cap_factor, None))
        .collect()
}

/// Seed builder that skips the search when a satellite's id set is unchanged
/// from the previous call.
#[derive(Debug, Default)]
pub struct SeedForge {
    pub cap_factor: u64,
    previous: HashMap<SatId, (Vec<FlowId>, u64)>,
    pub searches: usize,
    pub reuses: usize,
}

impl SeedForge {
    pub fn new(cap_factor: u64) -> Self {
        Self {
            cap_factor,
            ..Default::default()
        }
    }

    pub fn build(&mut self, flow_sets: &[FlowSet]) -> Result<Vec<SeedTable>, SeedError> {
        let prev = &self.previous;
        let cap = self.cap_factor;
        let out: Vec<(SeedTable, Vec<FlowId>, bool)> = flow_sets
            .par_iter()
            .map(|s| {
                let ids = sorted_ids(s);
                let reuse = prev
                    .get(&s.sat_id)
                    .filter(|(p, _)| *p == ids)
                    .map(|(_, h)| *h);
                let t = table_for(s, &ids, cap, reuse)?;
                Ok((t, ids, reuse.is_some()))
            })
            .collect::<Result<_, SeedError>>()?;
        let mut tables = Vec::with_capacity(out.len());
        for (t, ids, reused) in out {
            if !ids.is_empty() {
                if reused {
                    self.reuses += 1;
                } else {
                    self.searches += 1;
                }
            }
            self.previous.insert(t.sat_id, (ids, t.h));
            tables.push(t);
        }
        Ok(tables)
    }
}

pub const SEED_CSV_HEADER: &str = "epoch,sat_id,h,n,checksum";

pub fn seed_tables_csv(tables: &[SeedTable]) -> String {
    let mut out = String::new();
    for t in tables {
        writeln!(
            out,
            "{},{},{},{},{:016x}",
            t.epoch, t.sat_id, t.h, t.n, t.checksum
        )
        .unwrap();
    }
    out
}

/// Parses rows written by [`seed_tables_csv`], with or without the header.
pub fn parse_seed_csv(text: &str) -> Result<Vec<SeedTable>, SeedError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == SEED_CSV_HEADER {
            continue;
        }
        let err = |reason: &str| SeedError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        out.push(SeedTable {
            epoch: f[0].parse().map_err(|_| err("epoch"))?,
            sat_id: f[1].parse().map_err(|_| err("sat_id"))?,
            h: f[2].parse().map_err(|_| err("h"))?,
            n: f[3].parse().map_err(|_| err("n"))?,
            checksum: u64::from_str_radix(f[4], 16).map_err(|_| err("checksum"))?,
        });
    }
    Ok(out)
}
