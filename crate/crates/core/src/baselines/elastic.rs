use super::cm::CmSketch;
use super::hash::{bucket, mix64};
use super::FlowSketch;

pub const ES_ENTRIES_PER_BUCKET: usize = 8;
/// Key (4 B) and positive vote (4 B); the flag rides in the key's top bit.
pub const ES_ENTRY_BYTES: usize = 8;
/// Entries plus one shared 4-byte negative vote.
pub const ES_BUCKET_BYTES: usize = ES_ENTRIES_PER_BUCKET * ES_ENTRY_BYTES + 4;
pub const ES_DEFAULT_LAMBDA: u64 = 8;
const ES_HEAVY_SEED: u64 = 0xe1a5_71c0;
const ES_LIGHT_FAMILY: u64 = 0x11_9470;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    key: u64,
    pos: u64,
    /// Set when earlier counts of this key may sit in the light part.
    flag: bool,
}

#[derive(Debug, Clone, Default)]
struct Bucket {
    entries: Vec<Entry>,
    neg: u64,
}

/// Heavy part of vote-evicting buckets over a one-row Count-Min light part.
#[derive(Debug, Clone)]
pub struct ElasticSketch {
    buckets: Vec<Bucket>,
    pub lambda: u64,
    pub light: CmSketch,
}

impl ElasticSketch {
    /// A quarter of `bytes` for the heavy part, the rest for the light part.
    pub fn with_memory(bytes: usize, lambda: u64) -> Self {
        let heavy = bytes / 4;
        let nb = heavy / ES_BUCKET_BYTES;
        let light_bytes = bytes - nb * ES_BUCKET_BYTES;
        Self {
            buckets: vec![Bucket::default(); nb],
            lambda: lambda.max(1),
            light: CmSketch::with_memory(light_bytes, 1, ES_LIGHT_FAMILY),
        }
    }

    pub fn heavy_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn update(&mut self, key: u64, units: u64) {
        if self.buckets.is_empty() {
            self.light.update(key, units);
            return;
        }
        let bi = bucket(mix64(key, ES_HEAVY_SEED), self.buckets.len());
        let b = &mut self.buckets[bi];
        if let Some(e) = b.entries.iter_mut().find(|e| e.key == key) {
            e.pos += units;
            return;
        }
        if b.entries.len() < ES_ENTRIES_PER_BUCKET {
            b.entries.push(Entry {
                key,
                pos: units,
                flag: false,
            });
            return;
        }
        b.neg += units;
        let (mi, min_pos) = b
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.pos))
            .min_by_key(|&(i, p)| (p, i))
            .expect("full bucket");
        if b.neg >= self.lambda * min_pos {
            let old = b.entries[mi];
            b.entries[mi] = Entry {
                key,
                pos: units,
                flag: true,
            };
            b.neg = 0;
            self.light.update(old.key, old.pos);
        } else {
            self.light.update(key, units);
        }
    }

    pub fn query(&self, key: u64) -> u64 {
        if !self.buckets.is_empty() {
            let b = &self.buckets[bucket(mix64(key, ES_HEAVY_SEED), self.buckets.len())];
            if let Some(e) = b.entries.iter().find(|e| e.key == key) {
                return if e.flag {
                    e.pos + self.light.query(key)
                } else {
                    e.pos
                };
            }
        }
        self.light.query(key)
    }

    pub fn memory_bytes(&self) -> usize {
        self.buckets.len() * ES_BUCKET_BYTES + self.light.memory_bytes()
    }

    pub fn clear(&mut self) {
        self.buckets.iter_mut().for_each(|b| *b = Bucket::default());
        self.light.clear();
    }
}

impl FlowSketch for ElasticSketch {
    fn update(&mut self, key: u64, units: u64) {
        ElasticSketch::update(self, key, units)
    }
    fn query(&self, key: u64) -> u64 {
        ElasticSketch::query(self, key)
    }
    fn used_bytes(&self) -> usize {
        self.memory_bytes()
    }
    fn clear(&mut self) {
        ElasticSketch::clear(self)
    }
}
