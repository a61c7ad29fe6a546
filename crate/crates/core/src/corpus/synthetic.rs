//! Synthetic paraphrase-cluster corpora.
//!
//! Utterances are bags of tokens. Every cluster (and every distractor) owns a
//! template of content tokens drawn without replacement from a shared content
//! vocabulary; each utterance samples a subset of its template plus a few
//! noise tokens from a separate noise vocabulary. Same-cluster texts therefore
//! overlap on content tokens in expectation, while any two texts can collide
//! on noise tokens — which is what buries the positives at scale.

use super::{Corpus, LabelOracle, PairKey, PairMode, Side, Utterance};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VocabConfig {
    /// Pool of distinct content tokens shared by all templates.
    pub content_vocab: usize,
    /// Content tokens owned by each template.
    pub template_tokens: usize,
    /// Content tokens sampled from the template per utterance.
    pub content_per_utterance: usize,
    /// Pool of noise tokens.
    pub noise_vocab: usize,
    /// Noise tokens sampled per utterance.
    pub noise_per_utterance: usize,
    /// Every n-th cluster gets one near-duplicate member pair: members 0 and
    /// 1 share a doubled content subset (noise still drawn independently).
    /// These are the easy positives that lexical retrieval can find; 0
    /// disables.
    pub near_duplicate_every: usize,
}

impl Default for VocabConfig {
    fn default() -> VocabConfig {
        VocabConfig {
            content_vocab: 40_000,
            template_tokens: 8,
            content_per_utterance: 3,
            noise_vocab: 200,
            noise_per_utterance: 5,
            near_duplicate_every: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_clusters: usize,
    pub cluster_size: usize,
    pub n_distractors: usize,
    pub vocab: VocabConfig,
    pub seed: u64,
}

/// Generate a symmetric corpus where label(a, b) = 1 iff a and b belong to
/// the same cluster. Deterministic given the seed.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(Corpus, LabelOracle)> {
    let v = &cfg.vocab;
    if cfg.n_clusters < 1 || cfg.cluster_size < 1 {
        return Err(Error::InvalidConfig(
            "need at least one cluster of size at least one".into(),
        ));
    }
    if v.template_tokens < 1
        || v.content_per_utterance < 1
        || v.content_per_utterance > v.template_tokens
    {
        return Err(Error::InvalidConfig(format!(
            "content_per_utterance must lie in 1..=template_tokens, got {} of {}",
            v.content_per_utterance, v.template_tokens
        )));
    }
    if v.noise_per_utterance > v.noise_vocab {
        return Err(Error::InvalidConfig(
            "noise_per_utterance exceeds noise_vocab".into(),
        ));
    }
    let n_templates = cfg.n_clusters + cfg.n_distractors;
    let needed = n_templates * v.template_tokens;
    if needed > v.content_vocab {
        return Err(Error::VocabTooSmall {
            needed,
            available: v.content_vocab,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    // Distinct content tokens per template: one global shuffle, consumed in
    // template order.
    let mut content_pool: Vec<u32> = (0..v.content_vocab as u32).collect();
    content_pool.shuffle(&mut rng);
    let template = |t: usize| &content_pool[t * v.template_tokens..(t + 1) * v.template_tokens];

    let noise_pool: Vec<u32> = (0..v.noise_vocab as u32).collect();

    let mut utterances = Vec::with_capacity(cfg.n_clusters * cfg.cluster_size + cfg.n_distractors);
    let sample_bag = |rng: &mut ChaCha20Rng, template_tokens: &[u32]| {
        let content: Vec<u32> = template_tokens
            .choose_multiple(rng, v.content_per_utterance)
            .copied()
            .collect();
        let noise: Vec<u32> = noise_pool
            .choose_multiple(rng, v.noise_per_utterance)
            .copied()
            .collect();
        (content, noise)
    };
    let mut emit = |content: &[u32], noise: &[u32], id: u32| {
        let tokens: Vec<String> = content
            .iter()
            .map(|t| format!("c{t}"))
            .chain(noise.iter().map(|t| format!("z{t}")))
            .collect();
        utterances.push(Utterance {
            id,
            side: Side::Shared,
            text: tokens.join(" "),
        });
    };

    let mut next_id = 0u32;
    let mut positives = Vec::new();
    let dup_content = (2 * v.content_per_utterance).min(v.template_tokens);
    for c in 0..cfg.n_clusters {
        let near_dup = v.near_duplicate_every > 0 && c % v.near_duplicate_every == 0;
        let first = next_id;
        let mut shared_content: Option<Vec<u32>> = None;
        for j in 0..cfg.cluster_size {
            let (content, noise) = if near_dup && j < 2 {
                // The near-duplicate pair: one enlarged content subset used
                // by both members, noise independent per member.
                let content = shared_content
                    .get_or_insert_with(|| {
                        template(c)
                            .choose_multiple(&mut rng, dup_content)
                            .copied()
                            .collect()
                    })
                    .clone();
                let noise: Vec<u32> = noise_pool
                    .choose_multiple(&mut rng, v.noise_per_utterance)
                    .copied()
                    .collect();
                (content, noise)
            } else {
                sample_bag(&mut rng, template(c))
            };
            emit(&content, &noise, next_id);
            next_id += 1;
        }
        for i in first..next_id {
            for j in i + 1..next_id {
                positives.push(PairKey { a: i, b: j });
            }
        }
    }
    for d in 0..cfg.n_distractors {
        let (content, noise) = sample_bag(&mut rng, template(cfg.n_clusters + d));
        emit(&content, &noise, next_id);
        next_id += 1;
    }

    let corpus = Corpus::new(PairMode::Symmetric, utterances, Vec::new())?;
    let oracle = LabelOracle::from_positive_pairs(PairMode::Symmetric, corpus.n_left(), &positives);
    Ok((corpus, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PairSpace;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n_clusters: 10,
            cluster_size: 4,
            n_distractors: 0,
            vocab: VocabConfig::default(),
            seed: 1,
        }
    }

    #[test]
    fn positive_count_is_clusters_times_choose_two() {
        let (corpus, oracle) = gen_synthetic(&small_cfg()).unwrap();
        assert_eq!(corpus.n_left(), 40);
        let space = PairSpace::symmetric((0..40).collect());
        assert_eq!(oracle.positives_in(&space).len(), 10 * 6);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let (a, _) = gen_synthetic(&small_cfg()).unwrap();
        let (b, _) = gen_synthetic(&small_cfg()).unwrap();
        for (x, y) in a.left().iter().zip(b.left()) {
            assert_eq!(x.text, y.text);
        }
        let mut other = small_cfg();
        other.seed = 2;
        let (c, _) = gen_synthetic(&other).unwrap();
        assert!(a.left().iter().zip(c.left()).any(|(x, y)| x.text != y.text));
    }

    #[test]
    fn imbalance_verified_by_full_enumeration() {
        let cfg = SyntheticConfig {
            n_clusters: 50,
            cluster_size: 4,
            n_distractors: 1800,
            vocab: VocabConfig::default(),
            seed: 7,
        };
        let (corpus, oracle) = gen_synthetic(&cfg).unwrap();
        assert_eq!(corpus.n_left(), 2000);
        let space = PairSpace::symmetric((0..2000).collect());
        assert_eq!(space.size(), 1_999_000);
        let mut positives = 0u64;
        for key in space.iter() {
            if oracle.label(&key) {
                positives += 1;
            }
        }
        assert_eq!(positives, 300); // 50 * C(4,2); ratio ~ 1:6663
        assert_eq!(oracle.positives_in(&space).len() as u64, positives);
    }

    #[test]
    fn vocab_too_small_is_fatal() {
        let mut cfg = small_cfg();
        cfg.vocab.content_vocab = 30;
        let err = gen_synthetic(&cfg).unwrap_err();
        assert!(matches!(err, Error::VocabTooSmall { .. }));
    }

    #[test]
    fn cluster_texts_share_content_tokens() {
        let (corpus, _) = gen_synthetic(&small_cfg()).unwrap();
        let tokens = |id: u32| {
            corpus
                .left_text(id)
                .split(' ')
                .filter(|t| t.starts_with('c'))
                .map(str::to_owned)
                .collect::<std::collections::HashSet<_>>()
        };
        // Members of cluster 0 draw from one template; cluster 1 from another.
        let within: usize = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| tokens(i).intersection(&tokens(j)).count())
            .sum();
        let across: usize = (0..4)
            .flat_map(|i| (4..8).map(move |j| (i, j)))
            .map(|(i, j)| tokens(i).intersection(&tokens(j)).count())
            .sum();
        assert!(within > 0);
        assert_eq!(across, 0);
    }
}
