//! Uniform pair sampling by index unranking.

use super::{PairKey, PairSpace};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

/// Draw `count` pairs uniformly without replacement from `space \ exclude`.
///
/// Pairs are decoded from uniform flat indices, so the quadratic space is
/// never materialized. `exclude` must be a subset of the space. Deterministic
/// given the seed; the returned order is the draw order.
pub fn sample_random_pairs(
    space: &PairSpace,
    count: u64,
    exclude: &HashSet<PairKey>,
    seed: u64,
) -> Result<Vec<PairKey>> {
    let available = space.size().saturating_sub(exclude.len() as u64);
    if count > available {
        return Err(Error::SampleExhausted {
            requested: count,
            available,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut used: HashSet<u64> = HashSet::with_capacity(count as usize);
    let mut out = Vec::with_capacity(count as usize);
    let size = space.size();
    while (out.len() as u64) < count {
        let idx = rng.gen_range(0..size);
        if !used.insert(idx) {
            continue;
        }
        let key = space.pair_at(idx);
        if exclude.contains(&key) {
            continue;
        }
        out.push(key);
    }
    Ok(out)
}
