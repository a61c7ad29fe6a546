//! Component-atomic train/dev/test splitting.

use super::union_find::UnionFind;
use super::{Corpus, PairMode, PairSpace, StatedDataset};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

pub const SPLITS: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split '{other}'"))),
        }
    }
}

/// Split assignment per utterance node.
///
/// No pair that was stated in the original dataset crosses splits: connected
/// components of the pairing graph are assigned atomically.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    mode: PairMode,
    n_left: usize,
    assignment: Vec<Split>,
    /// Fraction of nodes that landed in each split, train/dev/test order.
    pub achieved: [f64; 3],
    /// Components larger than the largest split target (assigned there anyway).
    pub oversized_components: usize,
}

impl SplitSpec {
    pub fn split_of_node(&self, node: usize) -> Split {
        self.assignment[node]
    }

    /// Ids of one side that belong to `split`, ascending.
    pub fn ids(&self, split: Split, right_side: bool) -> Vec<u32> {
        match (self.mode, right_side) {
            (PairMode::Symmetric, _) => (0..self.assignment.len())
                .filter(|&n| self.assignment[n] == split)
                .map(|n| n as u32)
                .collect(),
            (PairMode::Bipartite, false) => (0..self.n_left)
                .filter(|&n| self.assignment[n] == split)
                .map(|n| n as u32)
                .collect(),
            (PairMode::Bipartite, true) => (self.n_left..self.assignment.len())
                .filter(|&n| self.assignment[n] == split)
                .map(|n| (n - self.n_left) as u32)
                .collect(),
        }
    }

    /// The all-pairs space of one split.
    pub fn space(&self, split: Split) -> PairSpace {
        match self.mode {
            PairMode::Symmetric => PairSpace::symmetric(self.ids(split, false)),
            PairMode::Bipartite => {
                PairSpace::bipartite(self.ids(split, false), self.ids(split, true))
            }
        }
    }
}

/// Assign pairing-graph components to splits, greedily by shuffled component
/// order. Components go to the split with the largest remaining deficit, so
/// achieved fractions track the targets as closely as component granularity
/// allows.
pub fn split_corpus(
    corpus: &Corpus,
    stated: &StatedDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<SplitSpec> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be nonnegative and sum to 1, got {fractions:?}"
        )));
    }

    let n = corpus.n_nodes();
    let mut uf = UnionFind::new(n);
    for (key, _) in stated.pairs() {
        let a = corpus.node_of(false, key.a);
        let b = corpus.node_of(true, key.b);
        uf.union(a as u32, b as u32);
    }
    let mut components = uf.components();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    components.shuffle(&mut rng);

    let targets: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let largest_split = (0..3)
        .max_by(|&i, &j| targets[i].total_cmp(&targets[j]))
        .unwrap();
    let max_target = targets[largest_split];

    let mut assigned = [0usize; 3];
    let mut assignment = vec![Split::Train; n];
    let mut oversized = 0usize;
    for comp in &components {
        let choice = if comp.len() as f64 > max_target {
            oversized += 1;
            largest_split
        } else {
            // Largest remaining deficit wins; ties resolve in split order.
            (0..3)
                .max_by(|&i, &j| {
                    (targets[i] - assigned[i] as f64).total_cmp(&(targets[j] - assigned[j] as f64))
                })
                .unwrap()
        };
        for &node in comp {
            assignment[node as usize] = SPLITS[choice];
        }
        assigned[choice] += comp.len();
    }

    let achieved = [
        assigned[0] as f64 / n as f64,
        assigned[1] as f64 / n as f64,
        assigned[2] as f64 / n as f64,
    ];
    Ok(SplitSpec {
        mode: corpus.mode(),
        n_left: corpus.n_left(),
        assignment,
        achieved,
        oversized_components: oversized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PairKey, Side, Utterance};
    use rand::Rng;

    fn shared_corpus(n: usize) -> Corpus {
        Corpus::new(
            PairMode::Symmetric,
            (0..n)
                .map(|i| Utterance {
                    id: i as u32,
                    side: Side::Shared,
                    text: format!("u{i}"),
                })
                .collect(),
            Vec::new(),
        )
        .unwrap()
    }

    #[test]
    fn components_stay_whole() {
        let corpus = shared_corpus(4);
        let stated = StatedDataset::new(vec![(PairKey { a: 0, b: 1 }, true)]);
        let spec = split_corpus(&corpus, &stated, [0.5, 0.25, 0.25], 3).unwrap();
        assert_eq!(spec.split_of_node(0), spec.split_of_node(1));
    }

    #[test]
    fn all_train_when_fraction_one() {
        let corpus = shared_corpus(7);
        let spec = split_corpus(&corpus, &StatedDataset::default(), [1.0, 0.0, 0.0], 0).unwrap();
        for node in 0..7 {
            assert_eq!(spec.split_of_node(node), Split::Train);
        }
        assert_eq!(spec.achieved, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn oversized_component_goes_to_largest_split() {
        let corpus = shared_corpus(6);
        // One component of 5 nodes with fractions maxing out at 0.5.
        let stated = StatedDataset::new(
            (0..4)
                .map(|i| (PairKey { a: i, b: i + 1 }, i % 2 == 0))
                .collect(),
        );
        let spec = split_corpus(&corpus, &stated, [0.5, 0.25, 0.25], 9).unwrap();
        assert_eq!(spec.oversized_components, 1);
        for node in 0..5 {
            assert_eq!(spec.split_of_node(node), Split::Train);
        }
    }

    #[test]
    fn no_stated_edge_crosses_splits_on_random_graph() {
        let n = 1000usize;
        let corpus = shared_corpus(n);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let pairs: Vec<(PairKey, bool)> = (0..600)
            .filter_map(|_| {
                let a = rng.gen_range(0..n as u32);
                let b = rng.gen_range(0..n as u32);
                PairKey::symmetric(a, b).map(|k| (k, rng.gen_bool(0.5)))
            })
            .collect();
        let stated = StatedDataset::new(pairs.clone());
        let spec = split_corpus(&corpus, &stated, [0.6, 0.2, 0.2], 42).unwrap();
        // Exhaustive edge scan.
        for (key, _) in &pairs {
            assert_eq!(
                spec.split_of_node(key.a as usize),
                spec.split_of_node(key.b as usize),
                "stated pair {key:?} crosses splits"
            );
        }
        // Achieved fractions track targets up to component granularity; at
        // average degree 1.2 a sizable component exists, so allow slack.
        assert!((spec.achieved[0] - 0.6).abs() < 0.15, "{:?}", spec.achieved);
    }

    #[test]
    fn bipartite_split_separates_sides() {
        let left: Vec<Utterance> = (0..4)
            .map(|i| Utterance {
                id: i,
                side: Side::Left,
                text: format!("q{i}"),
            })
            .collect();
        let right: Vec<Utterance> = (0..6)
            .map(|i| Utterance {
                id: i,
                side: Side::Right,
                text: format!("s{i}"),
            })
            .collect();
        let corpus = Corpus::new(PairMode::Bipartite, left, right).unwrap();
        let stated = StatedDataset::new(vec![
            (PairKey::bipartite(0, 0), true),
            (PairKey::bipartite(0, 1), false),
        ]);
        let spec = split_corpus(&corpus, &stated, [0.5, 0.25, 0.25], 1).unwrap();
        let s = spec.split_of_node(0);
        assert_eq!(spec.split_of_node(4), s); // right 0 offsets to node 4
        assert_eq!(spec.split_of_node(5), s);
        let space = spec.space(s);
        assert!(space.contains(&PairKey::bipartite(0, 0)));
    }
}
