//! Utterance stores, pair spaces, splits, and ground-truth label imputation.
//!
//! A corpus owns the utterances of a pairwise task. In symmetric mode every
//! utterance lives in one shared store and examples are unordered distinct
//! pairs; in bipartite mode the two sides are separate stores and examples
//! are (left, right) pairs.

mod io;
mod oracle;
mod sampling;
mod split;
mod synthetic;
mod union_find;

pub use io::{ingest, write_pairs_tsv, write_utterances_tsv, IngestReport};
pub use oracle::LabelOracle;
pub use sampling::sample_random_pairs;
pub use split::{split_corpus, Split, SplitSpec};
pub use synthetic::{gen_synthetic, SyntheticConfig, VocabConfig};
pub use union_find::UnionFind;

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which store an utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Shared,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "LEFT",
            Side::Right => "RIGHT",
            Side::Shared => "SHARED",
        }
    }
}

/// Structure of the pair space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// One shared store; examples are unordered distinct pairs.
    Symmetric,
    /// Two stores; examples pair a left utterance with a right one.
    Bipartite,
}

/// A single utterance. Ids are dense per side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: u32,
    pub side: Side,
    pub text: String,
}

/// Key of one pair example.
///
/// Symmetric mode keeps the invariant `a < b`; bipartite mode indexes `a`
/// into the left store and `b` into the right store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub a: u32,
    pub b: u32,
}

impl PairKey {
    /// Canonical unordered pair; `None` for self-pairs.
    pub fn symmetric(x: u32, y: u32) -> Option<PairKey> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(PairKey { a: x, b: y }),
            std::cmp::Ordering::Greater => Some(PairKey { a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn bipartite(left: u32, right: u32) -> PairKey {
        PairKey { a: left, b: right }
    }
}

/// The utterances of one task instance.
#[derive(Debug, Clone)]
pub struct Corpus {
    mode: PairMode,
    // Symmetric mode stores everything in `left`; `right` stays empty.
    left: Vec<Utterance>,
    right: Vec<Utterance>,
}

impl Corpus {
    pub fn new(mode: PairMode, left: Vec<Utterance>, right: Vec<Utterance>) -> Result<Corpus> {
        if mode == PairMode::Symmetric && !right.is_empty() {
            return Err(Error::InvalidConfig(
                "symmetric corpus must keep a single shared store".into(),
            ));
        }
        for (store, side) in [(&left, "left"), (&right, "right")] {
            for (i, utt) in store.iter().enumerate() {
                if utt.id as usize != i {
                    return Err(Error::InvalidConfig(format!(
                        "{side} ids must be dense: expected {i}, found {}",
                        utt.id
                    )));
                }
                if utt.text.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "{side} utterance {i} has empty text"
                    )));
                }
            }
        }
        Ok(Corpus { mode, left, right })
    }

    pub fn mode(&self) -> PairMode {
        self.mode
    }

    /// Utterances of the left store (the shared store in symmetric mode).
    pub fn left(&self) -> &[Utterance] {
        &self.left
    }

    /// Utterances of the right store; aliases the shared store in symmetric mode.
    pub fn right(&self) -> &[Utterance] {
        match self.mode {
            PairMode::Symmetric => &self.left,
            PairMode::Bipartite => &self.right,
        }
    }

    pub fn n_left(&self) -> usize {
        self.left.len()
    }

    pub fn n_right(&self) -> usize {
        self.right().len()
    }

    /// Total node count for the split graph: one node per stored utterance.
    pub fn n_nodes(&self) -> usize {
        match self.mode {
            PairMode::Symmetric => self.left.len(),
            PairMode::Bipartite => self.left.len() + self.right.len(),
        }
    }

    /// Node index of a pair endpoint. In bipartite mode right ids are offset
    /// past the left store.
    pub fn node_of(&self, endpoint_is_right: bool, id: u32) -> usize {
        match (self.mode, endpoint_is_right) {
            (PairMode::Symmetric, _) | (PairMode::Bipartite, false) => id as usize,
            (PairMode::Bipartite, true) => self.left.len() + id as usize,
        }
    }

    pub fn left_text(&self, id: u32) -> &str {
        &self.left[id as usize].text
    }

    pub fn right_text(&self, id: u32) -> &str {
        &self.right()[id as usize].text
    }
}

/// The set of pairs drawn from one split's utterances.
#[derive(Debug, Clone)]
pub struct PairSpace {
    mode: PairMode,
    left_ids: Vec<u32>,
    right_ids: Vec<u32>,
}

impl PairSpace {
    /// Symmetric space over one sorted, deduplicated id set.
    pub fn symmetric(mut ids: Vec<u32>) -> PairSpace {
        ids.sort_unstable();
        ids.dedup();
        PairSpace {
            mode: PairMode::Symmetric,
            left_ids: ids,
            right_ids: Vec::new(),
        }
    }

    pub fn bipartite(mut left_ids: Vec<u32>, mut right_ids: Vec<u32>) -> PairSpace {
        left_ids.sort_unstable();
        left_ids.dedup();
        right_ids.sort_unstable();
        right_ids.dedup();
        PairSpace {
            mode: PairMode::Bipartite,
            left_ids,
            right_ids,
        }
    }

    pub fn mode(&self) -> PairMode {
        self.mode
    }

    pub fn left_ids(&self) -> &[u32] {
        &self.left_ids
    }

    pub fn right_ids(&self) -> &[u32] {
        match self.mode {
            PairMode::Symmetric => &self.left_ids,
            PairMode::Bipartite => &self.right_ids,
        }
    }

    /// Exact cardinality: n(n-1)/2 in symmetric mode, |L|·|R| in bipartite mode.
    pub fn size(&self) -> u64 {
        match self.mode {
            PairMode::Symmetric => {
                let n = self.left_ids.len() as u64;
                n * (n - 1) / 2
            }
            PairMode::Bipartite => self.left_ids.len() as u64 * self.right_ids.len() as u64,
        }
    }

    /// Closed-form unranking: decode the pair at a flat index without
    /// enumerating the space.
    pub fn pair_at(&self, index: u64) -> PairKey {
        debug_assert!(index < self.size());
        match self.mode {
            PairMode::Symmetric => {
                let n = self.left_ids.len() as u128;
                let i = index as u128;
                // cum(p) = pairs whose first position is < p.
                let cum = |p: u128| p * (n - 1) - p * p.saturating_sub(1) / 2;
                let (mut lo, mut hi) = (0u128, n - 1);
                // largest p with cum(p) <= i
                while lo < hi {
                    let mid = (lo + hi + 1) / 2;
                    if cum(mid) <= i {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                let p = lo;
                let q = p + 1 + (i - cum(p));
                PairKey {
                    a: self.left_ids[p as usize],
                    b: self.left_ids[q as usize],
                }
            }
            PairMode::Bipartite => {
                let nr = self.right_ids.len() as u64;
                PairKey {
                    a: self.left_ids[(index / nr) as usize],
                    b: self.right_ids[(index % nr) as usize],
                }
            }
        }
    }

    /// Membership test against the split's id sets.
    pub fn contains(&self, key: &PairKey) -> bool {
        match self.mode {
            PairMode::Symmetric => {
                key.a < key.b
                    && self.left_ids.binary_search(&key.a).is_ok()
                    && self.left_ids.binary_search(&key.b).is_ok()
            }
            PairMode::Bipartite => {
                self.left_ids.binary_search(&key.a).is_ok()
                    && self.right_ids.binary_search(&key.b).is_ok()
            }
        }
    }

    /// Full enumeration in index order. Only for spaces small enough to walk.
    pub fn iter(&self) -> impl Iterator<Item = PairKey> + '_ {
        (0..self.size()).map(|i| self.pair_at(i))
    }
}

/// Pairs carried over from the original heuristic dataset, with their
/// stated labels.
#[derive(Debug, Clone, Default)]
pub struct StatedDataset {
    pairs: Vec<(PairKey, bool)>,
}

impl StatedDataset {
    pub fn new(pairs: Vec<(PairKey, bool)>) -> StatedDataset {
        StatedDataset { pairs }
    }

    pub fn pairs(&self) -> &[(PairKey, bool)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.pairs.iter().filter(|(_, l)| *l).count()
    }

    /// Pairs whose endpoints both lie inside the given space.
    pub fn restrict_to(&self, space: &PairSpace) -> StatedDataset {
        StatedDataset {
            pairs: self
                .pairs
                .iter()
                .filter(|(k, _)| space.contains(k))
                .copied()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_key_canonical() {
        assert_eq!(PairKey::symmetric(3, 1), Some(PairKey { a: 1, b: 3 }));
        assert_eq!(PairKey::symmetric(1, 3), PairKey::symmetric(3, 1));
        assert_eq!(PairKey::symmetric(2, 2), None);
    }

    #[test]
    fn symmetric_space_size_and_unranking() {
        let space = PairSpace::symmetric(vec![0, 1, 2, 3]);
        assert_eq!(space.size(), 6);
        let all: Vec<PairKey> = space.iter().collect();
        assert_eq!(all.len(), 6);
        // all distinct, all canonical, all contained
        for (i, k) in all.iter().enumerate() {
            assert!(k.a < k.b);
            assert!(space.contains(k));
            for other in &all[..i] {
                assert_ne!(other, k);
            }
        }
    }

    #[test]
    fn bipartite_space_size_and_unranking() {
        let space = PairSpace::bipartite(vec![0, 1, 2], vec![0, 1]);
        assert_eq!(space.size(), 6);
        let all: Vec<PairKey> = space.iter().collect();
        assert_eq!(all.len(), 6);
        assert!(space.contains(&PairKey::bipartite(2, 1)));
        assert!(!space.contains(&PairKey::bipartite(3, 0)));
    }

    #[test]
    fn cardinality_matches_enumeration_up_to_100() {
        for n in [2usize, 5, 17, 50, 100] {
            let space = PairSpace::symmetric((0..n as u32).collect());
            assert_eq!(space.iter().count() as u64, space.size());
        }
        let space = PairSpace::bipartite((0..40).collect(), (0..25).collect());
        assert_eq!(space.iter().count() as u64, space.size());
    }

    #[test]
    fn unranking_is_bijective_on_sparse_ids() {
        // Non-contiguous ids, as produced by splits.
        let ids: Vec<u32> = vec![2, 3, 7, 11, 19, 23, 40];
        let space = PairSpace::symmetric(ids.clone());
        let mut seen = std::collections::HashSet::new();
        for i in 0..space.size() {
            let k = space.pair_at(i);
            assert!(ids.contains(&k.a) && ids.contains(&k.b) && k.a < k.b);
            assert!(seen.insert(k));
        }
        assert_eq!(seen.len() as u64, space.size());
    }

    #[test]
    fn restrict_stated_to_space() {
        let stated = StatedDataset::new(vec![
            (PairKey { a: 0, b: 1 }, true),
            (PairKey { a: 2, b: 5 }, false),
        ]);
        let space = PairSpace::symmetric(vec![0, 1, 2]);
        let restricted = stated.restrict_to(&space);
        assert_eq!(restricted.pairs(), &[(PairKey { a: 0, b: 1 }, true)]);
    }
}
