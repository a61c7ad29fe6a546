//! Imputed ground-truth labeling of arbitrary pairs.

use super::union_find::UnionFind;
use super::{PairKey, PairMode, PairSpace};
use std::collections::HashSet;

/// Answers `label(pair)` for every pair in the corpus.
///
/// Symmetric mode takes the reflexive-symmetric-transitive closure of the
/// seeded positive edges: two utterances are positive iff they share a
/// connected component. Bipartite mode treats exactly the seeded pairs as
/// positive and everything else as negative.
#[derive(Debug, Clone)]
pub enum LabelOracle {
    Symmetric {
        /// Flattened union-find root per utterance id.
        root: Vec<u32>,
    },
    Bipartite {
        positives: HashSet<PairKey>,
    },
}

impl LabelOracle {
    /// Seed an oracle from positive pairs. In symmetric mode `n` is the
    /// shared store size and the closure is applied; in bipartite mode the
    /// set is stored as-is.
    pub fn from_positive_pairs(mode: PairMode, n: usize, positives: &[PairKey]) -> LabelOracle {
        match mode {
            PairMode::Symmetric => {
                let mut uf = UnionFind::new(n);
                for key in positives {
                    uf.union(key.a, key.b);
                }
                LabelOracle::Symmetric { root: uf.flatten() }
            }
            PairMode::Bipartite => LabelOracle::Bipartite {
                positives: positives.iter().copied().collect(),
            },
        }
    }

    pub fn label(&self, key: &PairKey) -> bool {
        match self {
            LabelOracle::Symmetric { root } => root[key.a as usize] == root[key.b as usize],
            LabelOracle::Bipartite { positives } => positives.contains(key),
        }
    }

    /// Enumerate every positive pair inside a space, sorted.
    ///
    /// Positives stay enumerable even when the space itself is quadratic:
    /// symmetric positives group by component, bipartite positives are the
    /// stored set.
    pub fn positives_in(&self, space: &PairSpace) -> Vec<PairKey> {
        let mut out = Vec::new();
        match self {
            LabelOracle::Symmetric { root } => {
                let mut by_root: std::collections::BTreeMap<u32, Vec<u32>> =
                    std::collections::BTreeMap::new();
                for &id in space.left_ids() {
                    by_root.entry(root[id as usize]).or_default().push(id);
                }
                for members in by_root.values() {
                    for i in 0..members.len() {
                        for j in i + 1..members.len() {
                            out.push(PairKey {
                                a: members[i],
                                b: members[j],
                            });
                        }
                    }
                }
            }
            LabelOracle::Bipartite { positives } => {
                for key in positives {
                    if space.contains(key) {
                        out.push(*key);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn closure_forces_implied_positive() {
        let seeds = [PairKey { a: 0, b: 1 }, PairKey { a: 1, b: 2 }];
        let oracle = LabelOracle::from_positive_pairs(PairMode::Symmetric, 4, &seeds);
        assert!(oracle.label(&PairKey { a: 0, b: 2 }));
        assert!(!oracle.label(&PairKey { a: 0, b: 3 }));
    }

    #[test]
    fn closure_is_idempotent() {
        let seeds = [PairKey { a: 0, b: 1 }, PairKey { a: 1, b: 2 }];
        let oracle = LabelOracle::from_positive_pairs(PairMode::Symmetric, 5, &seeds);
        // Re-seed with an implied edge added; no label may change.
        let mut with_implied = seeds.to_vec();
        with_implied.push(PairKey { a: 0, b: 2 });
        let oracle2 = LabelOracle::from_positive_pairs(PairMode::Symmetric, 5, &with_implied);
        let space = PairSpace::symmetric((0..5).collect());
        for key in space.iter() {
            assert_eq!(oracle.label(&key), oracle2.label(&key));
        }
    }

    /// Independent component oracle: breadth-first search over the seed edges.
    fn bfs_components(n: usize, edges: &[PairKey]) -> Vec<u32> {
        let mut adj = vec![Vec::new(); n];
        for e in edges {
            adj[e.a as usize].push(e.b);
            adj[e.b as usize].push(e.a);
        }
        let mut comp = vec![u32::MAX; n];
        let mut next = 0u32;
        for start in 0..n {
            if comp[start] != u32::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start as u32]);
            comp[start] = next;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x as usize] {
                    if comp[y as usize] == u32::MAX {
                        comp[y as usize] = next;
                        queue.push_back(y);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    #[test]
    fn oracle_matches_bfs_on_random_graph() {
        let n = 500usize;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let edges: Vec<PairKey> = (0..400)
            .filter_map(|_| {
                let a = rng.gen_range(0..n as u32);
                let b = rng.gen_range(0..n as u32);
                PairKey::symmetric(a, b)
            })
            .collect();
        let oracle = LabelOracle::from_positive_pairs(PairMode::Symmetric, n, &edges);
        let comp = bfs_components(n, &edges);
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                assert_eq!(
                    oracle.label(&PairKey { a, b }),
                    comp[a as usize] == comp[b as usize],
                    "pair ({a},{b})"
                );
            }
        }
    }

    #[test]
    fn positives_in_space_enumerates_components() {
        let seeds = [PairKey { a: 0, b: 1 }, PairKey { a: 1, b: 2 }];
        let oracle = LabelOracle::from_positive_pairs(PairMode::Symmetric, 6, &seeds);
        let space = PairSpace::symmetric(vec![0, 1, 2, 4]);
        assert_eq!(
            oracle.positives_in(&space),
            vec![
                PairKey { a: 0, b: 1 },
                PairKey { a: 0, b: 2 },
                PairKey { a: 1, b: 2 }
            ]
        );
    }

    #[test]
    fn bipartite_oracle_is_exact_set() {
        let positives = [PairKey::bipartite(0, 3), PairKey::bipartite(2, 1)];
        let oracle = LabelOracle::from_positive_pairs(PairMode::Bipartite, 0, &positives);
        assert!(oracle.label(&PairKey::bipartite(0, 3)));
        assert!(!oracle.label(&PairKey::bipartite(3, 0)));
        let space = PairSpace::bipartite(vec![0, 1, 2], vec![0, 1, 2, 3]);
        assert_eq!(
            oracle.positives_in(&space),
            vec![PairKey::bipartite(0, 3), PairKey::bipartite(2, 1)]
        );
    }
}
