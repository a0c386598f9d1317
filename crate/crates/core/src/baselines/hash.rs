//! Fixed seeded 64-bit hashing shared by the baseline sketches.

/// SplitMix64 finalizer applied to `key ^ seed`.
pub fn mix64(key: u64, seed: u64) -> u64 {
    let mut z = key ^ seed;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Row seeds are fixed for the lifetime of a sketch; they never change per epoch.
pub fn row_seed(family: u64, row: usize) -> u64 {
    mix64(row as u64, family.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Maps a hash onto `0..n` without modulo bias worth caring about at these sizes.
pub fn bucket(hash: u64, n: usize) -> usize {
    ((hash as u128 * n as u128) >> 64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_get_distinct_seeds() {
        let s: Vec<u64> = (0..4).map(|r| row_seed(1, r)).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn bucket_is_in_range_and_spread() {
        let mut hits = [0u32; 8];
        for k in 0..8000u64 {
            let b = bucket(mix64(k, 7), 8);
            hits[b] += 1;
        }
        assert!(hits.iter().all(|&h| (800..1200).contains(&h)), "{hits:?}");
    }
}
