//! Nearest-neighbor candidate generation over the pair space.
//!
//! An index holds unit-normalized embeddings for one side's utterances. Per
//! left utterance it retrieves the m nearest neighbors under cosine, and the
//! union of those pairs — scored, canonicalized, deduplicated, and minus any
//! exclusions — forms the candidate pool that query selection works from.

use crate::corpus::{PairKey, PairMode};
use crate::embed::EmbeddingModel;
use crate::{Error, Result};
use std::collections::HashSet;

/// Neighbor-search contract.
///
/// The exact backend returns the true top-k. An approximate backend may be
/// plugged in behind this trait but must state the recall it guarantees
/// against the exact top-k; everything downstream assumes high recall, not
/// exactness.
pub trait NeighborBackend {
    /// Top-k stored ids by descending cosine against a unit-norm query.
    /// Ties break by ascending id.
    fn search(&self, query: &[f64], k: usize) -> Vec<(u32, f64)>;
}

/// Exact cosine index over one side's utterances.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<u32>,
    vectors: Vec<f64>, // len = ids.len() * dim, rows unit-normalized
}

impl EmbeddingIndex {
    /// Embed and index utterances given as (id, text).
    pub fn build(model: &EmbeddingModel, entries: &[(u32, &str)]) -> Result<EmbeddingIndex> {
        let mut vectors = Vec::with_capacity(entries.len() * model.dim());
        let mut ids = Vec::with_capacity(entries.len());
        for (id, text) in entries {
            let e = model
                .embed_utterance(text)
                .map_err(|err| contextualize(err, *id))?;
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-140 {
                return Err(Error::DegenerateEmbedding(format!("utterance {id}")));
            }
            vectors.extend(e.iter().map(|x| x / norm));
            ids.push(*id);
        }
        Ok(EmbeddingIndex {
            dim: model.dim(),
            ids,
            vectors,
        })
    }

    /// Index pre-computed vectors directly; rows are normalized here.
    pub fn from_vectors(ids: Vec<u32>, rows: Vec<Vec<f64>>) -> Result<EmbeddingIndex> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidConfig("ids and rows disagree in length".into()));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut vectors = Vec::with_capacity(ids.len() * dim);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::InvalidConfig("ragged vector rows".into()));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-140 {
                return Err(Error::DegenerateEmbedding(format!("vector for id {id}")));
            }
            vectors.extend(row.iter().map(|x| x / norm));
        }
        Ok(EmbeddingIndex { dim, ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    fn row(&self, pos: usize) -> &[f64] {
        &self.vectors[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Stored unit vector for an utterance id.
    pub fn vector_of(&self, id: u32) -> Option<&[f64]> {
        let pos = self.ids.iter().position(|&x| x == id)?;
        Some(self.row(pos))
    }
}

impl NeighborBackend for EmbeddingIndex {
    fn search(&self, query: &[f64], k: usize) -> Vec<(u32, f64)> {
        let mut scored: Vec<(u32, f64)> = (0..self.ids.len())
            .map(|pos| {
                let dot = self
                    .row(pos)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                (self.ids[pos], dot)
            })
            .collect();
        scored.sort_unstable_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        scored.truncate(k);
        scored
    }
}

/// A scored unlabeled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub key: PairKey,
    pub cosine: f64,
    pub prob: f64,
}

/// The pool of nearest-neighbor pairs available for query selection.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// Round the pool was built in, for provenance.
    pub round: u32,
    /// m actually used (clamped to the side size).
    pub m: usize,
    pub m_clamped: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Union over left utterances of their top-m neighbors, scored with the
/// model's inference-mode probability, minus already-labeled pairs.
///
/// Self-pairs are skipped in symmetric mode. Candidates appear in a
/// deterministic order: by left id, then neighbor rank, first occurrence
/// kept on deduplication.
pub fn build_candidates(
    model: &EmbeddingModel,
    index: &EmbeddingIndex,
    left: &[(u32, &str)],
    mode: PairMode,
    m: usize,
    exclude: &HashSet<PairKey>,
    round: u32,
) -> Result<CandidateSet> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be >= 1".into()));
    }
    let m_clamped = m > index.len();
    let m_eff = m.min(index.len());
    // One extra neighbor absorbs the skipped self-pair in symmetric mode.
    let k = match mode {
        PairMode::Symmetric => (m_eff + 1).min(index.len()),
        PairMode::Bipartite => m_eff,
    };
    let mut seen: HashSet<PairKey> = HashSet::new();
    let mut candidates = Vec::new();
    for (lid, text) in left {
        let e = model
            .embed_utterance(text)
            .map_err(|err| contextualize(err, *lid))?;
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-140 {
            return Err(Error::DegenerateEmbedding(format!("utterance {lid}")));
        }
        let unit: Vec<f64> = e.iter().map(|x| x / norm).collect();
        let mut taken = 0usize;
        for (nid, cosine) in index.search(&unit, k) {
            if taken == m_eff {
                break;
            }
            let key = match mode {
                PairMode::Symmetric => match PairKey::symmetric(*lid, nid) {
                    Some(key) => key,
                    None => continue, // self-pair
                },
                PairMode::Bipartite => PairKey::bipartite(*lid, nid),
            };
            taken += 1;
            if exclude.contains(&key) || !seen.insert(key) {
                continue;
            }
            candidates.push(Candidate {
                key,
                cosine,
                prob: model.prob_from_cosine(cosine),
            });
        }
    }
    Ok(CandidateSet {
        candidates,
        round,
        m: m_eff,
        m_clamped,
    })
}

fn contextualize(err: Error, id: u32) -> Error {
    match err {
        Error::EmptyText(what) => Error::EmptyText(format!("utterance {id}: {what}")),
        Error::DegenerateEmbedding(what) => {
            Error::DegenerateEmbedding(format!("utterance {id}: {what}"))
        }
        other => other,
    }
}

fn sorted_take(set: &CandidateSet, n: usize, by: impl Fn(&Candidate) -> f64) -> Vec<PairKey> {
    let mut order: Vec<&Candidate> = set.candidates.iter().collect();
    order.sort_unstable_by(|x, y| {
        by(x)
            .total_cmp(&by(y))
            .then(y.cosine.total_cmp(&x.cosine))
            .then(x.key.cmp(&y.key))
    });
    order.into_iter().take(n).map(|c| c.key).collect()
}

/// The n candidates with the largest probability. Ties break by descending
/// cosine, then pair key, so selection is reproducible. Asking for more than
/// the pool holds returns the whole pool.
pub fn top_scoring(set: &CandidateSet, n: usize) -> Vec<PairKey> {
    sorted_take(set, n, |c| -c.prob)
}

/// The n candidates whose probability is closest to 1/2, same tie-break.
pub fn most_uncertain(set: &CandidateSet, n: usize) -> Vec<PairKey> {
    sorted_take(set, n, |c| (c.prob - 0.5).abs())
}
