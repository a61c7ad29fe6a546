//! All-pairs evaluation with an importance-sampled false-positive estimator,
//! plus the heuristically-balanced metrics of the original datasets.
//!
//! True positives and false negatives are exact: the positives of a split are
//! enumerable. False positives are not — the negative set is quadratic — so
//! FP is estimated from a pool of "near" negatives (every one scored) and a
//! uniform random sample of the remaining negatives, importance-weighted by
//! w_random = |negatives| - |near|:
//!
//!   FP_hat(gamma) = sum_near 1[S >= gamma]
//!                 + (w_random / |random|) * sum_random 1[S >= gamma]
//!
//! Score comparisons use >= uniformly.

use crate::corpus::{sample_random_pairs, LabelOracle, PairKey, PairSpace};
use crate::embed::EmbeddingModel;
use crate::index::{build_candidates, EmbeddingIndex};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Evaluation pools for one split.
#[derive(Debug, Clone)]
pub struct EvalPool {
    /// Every positive pair in the split, exact.
    pub positives: Vec<PairKey>,
    /// Negative pairs with the highest static-embedding cosine.
    pub near: Vec<PairKey>,
    /// Uniform sample of the remaining negatives.
    pub random: Vec<PairKey>,
    /// |negatives| - |near|, the importance weight of the random pool.
    pub w_random: u64,
    /// True when the requested random size exceeded the leftover negatives.
    pub random_clamped: bool,
}

/// Assemble the evaluation pools for a split space.
///
/// Near negatives are the top `near_size` negative pairs under the static
/// model's cosine (positives filtered out), mirroring how the seed set is
/// retrieved. The random pool draws uniformly from what is left.
pub fn build_eval_pool(
    texts: &dyn Fn(bool, u32) -> String,
    space: &PairSpace,
    oracle: &LabelOracle,
    static_model: &EmbeddingModel,
    near_size: usize,
    random_size: usize,
    seed: u64,
) -> Result<EvalPool> {
    let positives = oracle.positives_in(space);
    let n_negatives = space.size() - positives.len() as u64;

    // Score the whole split with the static index (exact backend; desk-scale
    // spaces make m = side size affordable).
    let left_owned: Vec<(u32, String)> = space
        .left_ids()
        .iter()
        .map(|&id| (id, texts(false, id)))
        .collect();
    let right_owned: Vec<(u32, String)> = space
        .right_ids()
        .iter()
        .map(|&id| (id, texts(space.mode() == crate::corpus::PairMode::Bipartite, id)))
        .collect();
    let right_entries: Vec<(u32, &str)> =
        right_owned.iter().map(|(i, t)| (*i, t.as_str())).collect();
    let left_entries: Vec<(u32, &str)> =
        left_owned.iter().map(|(i, t)| (*i, t.as_str())).collect();
    let index = EmbeddingIndex::build(static_model, &right_entries)?;
    let m = index.len();
    let candidates = build_candidates(
        static_model,
        &index,
        &left_entries,
        space.mode(),
        m,
        &HashSet::new(),
        0,
    )?;

    let positive_set: HashSet<PairKey> = positives.iter().copied().collect();
    let mut negatives: Vec<&crate::index::Candidate> = candidates
        .candidates
        .iter()
        .filter(|c| !positive_set.contains(&c.key))
        .collect();
    negatives.sort_unstable_by(|x, y| y.cosine.total_cmp(&x.cosine).then(x.key.cmp(&y.key)));
    let near: Vec<PairKey> = negatives
        .iter()
        .take(near_size)
        .map(|c| c.key)
        .collect();

    let w_random = n_negatives - near.len() as u64;
    let mut exclude: HashSet<PairKey> = positive_set;
    exclude.extend(near.iter().copied());
    let available = space.size() - exclude.len() as u64;
    let random_clamped = (random_size as u64) > available;
    let draw = (random_size as u64).min(available);
    let random = sample_random_pairs(space, draw, &exclude, seed)?;

    Ok(EvalPool {
        positives,
        near,
        random,
        w_random,
        random_clamped,
    })
}

/// Exact TP/FN and estimated FP at one threshold, with the firing sums kept
/// separate so manual adjustment can re-weight them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub tp: u64,
    pub fn_count: u64,
    pub near_firing: u64,
    pub random_firing: u64,
    pub w_random: u64,
    pub random_pool: u64,
}

impl ThresholdCounts {
    pub fn fp_hat(&self) -> f64 {
        let random_term = if self.random_pool == 0 {
            0.0
        } else {
            self.w_random as f64 * self.random_firing as f64 / self.random_pool as f64
        };
        self.near_firing as f64 + random_term
    }

    pub fn precision(&self) -> f64 {
        let denom = self.tp as f64 + self.fp_hat();
        if denom == 0.0 {
            0.0
        } else {
            self.tp as f64 / denom
        }
    }

    pub fn recall(&self) -> f64 {
        let total = self.tp + self.fn_count;
        if total == 0 {
            0.0
        } else {
            self.tp as f64 / total as f64
        }
    }
}

/// Counts of a scoring function at threshold `gamma` over the pool.
pub fn counts_at_threshold(
    scores: &dyn Fn(&PairKey) -> f64,
    pool: &EvalPool,
    gamma: f64,
) -> Result<ThresholdCounts> {
    if pool.random.is_empty() && pool.w_random > 0 {
        return Err(Error::EstimatorUndefined);
    }
    let fires = |keys: &[PairKey]| keys.iter().filter(|k| scores(k) >= gamma).count() as u64;
    let tp = fires(&pool.positives);
    Ok(ThresholdCounts {
        tp,
        fn_count: pool.positives.len() as u64 - tp,
        near_firing: fires(&pool.near),
        random_firing: fires(&pool.random),
        w_random: pool.w_random,
        random_pool: pool.random.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub tp: u64,
    pub fp_hat: f64,
    pub fn_count: u64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve over descending distinct scores of the evaluated
/// points, and its area (average precision).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
    pub ap: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum PoolKind {
    Positive,
    Near,
    Random,
}

/// Sweep thresholds over all distinct scores of the pool, descending.
pub fn pr_curve(scores: &dyn Fn(&PairKey) -> f64, pool: &EvalPool) -> Result<PRCurve> {
    if pool.positives.is_empty() {
        return Err(Error::InvalidConfig(
            "precision-recall curve needs at least one positive".into(),
        ));
    }
    if pool.random.is_empty() && pool.w_random > 0 {
        return Err(Error::EstimatorUndefined);
    }
    let mut entries: Vec<(f64, PoolKind)> = Vec::with_capacity(
        pool.positives.len() + pool.near.len() + pool.random.len(),
    );
    for key in &pool.positives {
        entries.push((scores(key), PoolKind::Positive));
    }
    for key in &pool.near {
        entries.push((scores(key), PoolKind::Near));
    }
    for key in &pool.random {
        entries.push((scores(key), PoolKind::Random));
    }
    entries.sort_unstable_by(|x, y| y.0.total_cmp(&x.0));

    let n_pos = pool.positives.len() as u64;
    let random_weight = if pool.random.is_empty() {
        0.0
    } else {
        pool.w_random as f64 / pool.random.len() as f64
    };

    let mut points = Vec::new();
    let mut tp = 0u64;
    let mut near_firing = 0u64;
    let mut random_firing = 0u64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < entries.len() {
        let gamma = entries[i].0;
        // absorb every entry tied at this threshold
        while i < entries.len() && entries[i].0 == gamma {
            match entries[i].1 {
                PoolKind::Positive => tp += 1,
                PoolKind::Near => near_firing += 1,
                PoolKind::Random => random_firing += 1,
            }
            i += 1;
        }
        let fp_hat = near_firing as f64 + random_weight * random_firing as f64;
        let precision = if tp as f64 + fp_hat == 0.0 {
            0.0
        } else {
            tp as f64 / (tp as f64 + fp_hat)
        };
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PRPoint {
            threshold: gamma,
            tp,
            fp_hat,
            fn_count: n_pos - tp,
            precision,
            recall,
        });
    }
    Ok(PRCurve { points, ap })
}

/// Precision at the highest threshold whose recall reaches `r`.
pub fn precision_at_recall(curve: &PRCurve, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) || r == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "recall target must lie in (0, 1], got {r}"
        )));
    }
    for point in &curve.points {
        if point.recall >= r {
            return Ok(point.precision);
        }
    }
    Err(Error::RecallUnreachable {
        requested: r,
        max: curve.points.last().map_or(0.0, |p| p.recall),
    })
}

/// Fractions of putative false positives confirmed real by manual labeling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ManualAdjustment {
    pub p_near: f64,
    pub p_rand: f64,
}

impl ManualAdjustment {
    pub fn new(p_near: f64, p_rand: f64) -> Result<ManualAdjustment> {
        for (name, p) in [("p_near", p_near), ("p_rand", p_rand)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        Ok(ManualAdjustment { p_near, p_rand })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdjustedCounts {
    pub tp: u64,
    pub fp_hat_manual: f64,
    pub fn_count: u64,
    pub precision: f64,
}

/// Re-weight the firing sums by the manually-estimated real-error fractions.
pub fn adjusted_counts(counts: &ThresholdCounts, adj: &ManualAdjustment) -> AdjustedCounts {
    let random_term = if counts.random_pool == 0 {
        0.0
    } else {
        counts.w_random as f64 * counts.random_firing as f64 / counts.random_pool as f64
    };
    let fp_hat_manual = adj.p_near * counts.near_firing as f64 + adj.p_rand * random_term;
    let denom = counts.tp as f64 + fp_hat_manual;
    AdjustedCounts {
        tp: counts.tp,
        fp_hat_manual,
        fn_count: counts.fn_count,
        precision: if denom == 0.0 { 0.0 } else { counts.tp as f64 / denom },
    }
}

/// The headline numbers of one evaluation: what the JSON summary carries.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub ap: f64,
    /// Precision at recall 0.2; None if the curve never reaches that recall.
    pub p_at_r20: Option<f64>,
    pub positives: u64,
    pub near_pool: u64,
    pub random_pool: u64,
    pub w_random: u64,
}

pub fn summarize(curve: &PRCurve, pool: &EvalPool) -> MetricsSummary {
    MetricsSummary {
        ap: curve.ap,
        p_at_r20: precision_at_recall(curve, 0.2).ok(),
        positives: pool.positives.len() as u64,
        near_pool: pool.near.len() as u64,
        random_pool: pool.random.len() as u64,
        w_random: pool.w_random,
    }
}

/// Score every pool member with a model, embedding each distinct utterance
/// once. Returns a lookup map usable as the scoring function of the curve.
pub fn score_pool(
    model: &EmbeddingModel,
    texts: &dyn Fn(bool, u32) -> String,
    pool: &EvalPool,
    mode: crate::corpus::PairMode,
) -> Result<std::collections::HashMap<PairKey, f64>> {
    use std::collections::HashMap;
    let bipartite = mode == crate::corpus::PairMode::Bipartite;
    let mut left_emb: HashMap<u32, Vec<f64>> = HashMap::new();
    let mut right_emb: HashMap<u32, Vec<f64>> = HashMap::new();
    let mut scores = HashMap::new();
    let keys = pool.positives.iter().chain(&pool.near).chain(&pool.random);
    for key in keys {
        if !left_emb.contains_key(&key.a) {
            left_emb.insert(key.a, model.embed_utterance(&texts(false, key.a))?);
        }
        let right = if bipartite { &mut right_emb } else { &mut left_emb };
        if !right.contains_key(&key.b) {
            right.insert(key.b, model.embed_utterance(&texts(bipartite, key.b))?);
        }
        let ea = &left_emb[&key.a];
        let eb = if bipartite { &right_emb[&key.b] } else { &left_emb[&key.b] };
        scores.insert(*key, model.predict_prob(ea, eb)?);
    }
    Ok(scores)
}

/// Score stated pairs with a model; same embedding cache as `score_pool`.
pub fn score_stated(
    model: &EmbeddingModel,
    texts: &dyn Fn(bool, u32) -> String,
    stated: &crate::corpus::StatedDataset,
    mode: crate::corpus::PairMode,
) -> Result<std::collections::HashMap<PairKey, f64>> {
    use std::collections::HashMap;
    let bipartite = mode == crate::corpus::PairMode::Bipartite;
    let mut left_emb: HashMap<u32, Vec<f64>> = HashMap::new();
    let mut right_emb: HashMap<u32, Vec<f64>> = HashMap::new();
    let mut scores = HashMap::new();
    for (key, _) in stated.pairs() {
        if !left_emb.contains_key(&key.a) {
            left_emb.insert(key.a, model.embed_utterance(&texts(false, key.a))?);
        }
        let right = if bipartite { &mut right_emb } else { &mut left_emb };
        if !right.contains_key(&key.b) {
            right.insert(key.b, model.embed_utterance(&texts(bipartite, key.b))?);
        }
        let ea = &left_emb[&key.a];
        let eb = if bipartite { &right_emb[&key.b] } else { &left_emb[&key.b] };
        scores.insert(*key, model.predict_prob(ea, eb)?);
    }
    Ok(scores)
}

/// Metrics on the heuristically balanced stated dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BalancedReport {
    /// Accuracy at threshold 1/2.
    pub accuracy: f64,
    /// F1 over all stated examples (a-F1).
    pub f1: f64,
    /// Mean average precision over clean questions: left utterances with both
    /// a stated positive and a stated negative. None when no question is clean.
    pub c_map: Option<f64>,
    pub n_examples: usize,
    pub n_clean_questions: usize,
}

/// Accuracy, F1 and c-MAP of a scoring function on stated pairs.
pub fn balanced_metrics(
    scores: &dyn Fn(&PairKey) -> f64,
    stated: &crate::corpus::StatedDataset,
) -> BalancedReport {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut correct = 0u64;
    for (key, label) in stated.pairs() {
        let predicted = scores(key) >= 0.5;
        match (predicted, *label) {
            (true, true) => {
                tp += 1;
                correct += 1;
            }
            (false, false) => correct += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = stated.len();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let f1_denom = 2 * tp + fp + fn_;
    let f1 = if f1_denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / f1_denom as f64
    };

    // Group stated examples per left utterance for c-MAP.
    let mut by_question: std::collections::BTreeMap<u32, Vec<(PairKey, bool)>> =
        std::collections::BTreeMap::new();
    for (key, label) in stated.pairs() {
        by_question.entry(key.a).or_default().push((*key, *label));
    }
    let mut ap_sum = 0.0;
    let mut n_clean = 0usize;
    for examples in by_question.values() {
        let n_pos = examples.iter().filter(|(_, l)| *l).count();
        if n_pos == 0 || n_pos == examples.len() {
            continue; // not clean
        }
        n_clean += 1;
        let mut ranked = examples.clone();
        ranked.sort_by(|x, y| scores(&y.0).total_cmp(&scores(&x.0)).then(x.0.cmp(&y.0)));
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank, (_, label)) in ranked.iter().enumerate() {
            if *label {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
            }
        }
        ap_sum += ap / n_pos as f64;
    }
    BalancedReport {
        accuracy,
        f1,
        c_map: (n_clean > 0).then(|| ap_sum / n_clean as f64),
        n_examples: n,
        n_clean_questions: n_clean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, PairMode, StatedDataset, SyntheticConfig};
    use crate::embed::ModelConfig;
    use std::collections::HashMap;

    fn pool_from_counts() -> EvalPool {
        // |D_neg| = 100: 20 near + 80 weighted through 10 random draws.
        let near: Vec<PairKey> = (0..20).map(|i| PairKey { a: 1000 + i, b: 2000 + i }).collect();
        let random: Vec<PairKey> = (0..10).map(|i| PairKey { a: 3000 + i, b: 4000 + i }).collect();
        EvalPool {
            positives: vec![PairKey { a: 0, b: 1 }],
            near,
            random,
            w_random: 80,
            random_clamped: false,
        }
    }

    #[test]
    fn fp_hat_formula_arithmetic() {
        let pool = pool_from_counts();
        // 3 near fire, 2 random fire at gamma = 0.5.
        let scores = |k: &PairKey| -> f64 {
            if k.a >= 3000 {
                if k.a < 3002 { 0.9 } else { 0.1 }
            } else if k.a >= 1000 {
                if k.a < 1003 { 0.8 } else { 0.2 }
            } else {
                0.95
            }
        };
        let counts = counts_at_threshold(&scores, &pool, 0.5).unwrap();
        assert_eq!(counts.near_firing, 3);
        assert_eq!(counts.random_firing, 2);
        assert_eq!(counts.fp_hat(), 3.0 + 80.0 * 2.0 / 10.0); // = 19
        assert_eq!(counts.tp, 1);
        assert_eq!(counts.fn_count, 0);
    }

    #[test]
    fn empty_random_pool_with_weight_is_fatal() {
        let mut pool = pool_from_counts();
        pool.random.clear();
        let scores = |_: &PairKey| 0.5;
        assert!(matches!(
            counts_at_threshold(&scores, &pool, 0.5),
            Err(Error::EstimatorUndefined)
        ));
        // but w_random = 0 with no random pool is exact, not an error
        pool.w_random = 0;
        let counts = counts_at_threshold(&scores, &pool, 0.4).unwrap();
        assert_eq!(counts.fp_hat(), pool.near.len() as f64);
    }

    #[test]
    fn perfect_ranking_has_ap_one() {
        let pool = EvalPool {
            positives: vec![PairKey { a: 0, b: 1 }, PairKey { a: 0, b: 2 }],
            near: vec![PairKey { a: 5, b: 6 }, PairKey { a: 5, b: 7 }],
            random: vec![PairKey { a: 8, b: 9 }],
            w_random: 10,
            random_clamped: false,
        };
        let scores = |k: &PairKey| if k.a == 0 { 0.9 } else { 0.1 };
        let curve = pr_curve(&scores, &pool).unwrap();
        assert_eq!(curve.ap, 1.0);
        assert_eq!(precision_at_recall(&curve, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn inverted_two_point_curve_has_ap_half() {
        // One positive, one negative, negative scored higher: points are
        // (R=0, P=0) then (R=1, P=1/2), so AP = 0.5.
        let pool = EvalPool {
            positives: vec![PairKey { a: 0, b: 1 }],
            near: vec![PairKey { a: 2, b: 3 }],
            random: vec![],
            w_random: 0,
            random_clamped: false,
        };
        let scores = |k: &PairKey| if k.a == 0 { 0.2 } else { 0.8 };
        let curve = pr_curve(&scores, &pool).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!((curve.points[0].recall, curve.points[0].precision), (0.0, 0.0));
        assert_eq!((curve.points[1].recall, curve.points[1].precision), (1.0, 0.5));
        assert_eq!(curve.ap, 0.5);
        // Curve with recalls {0, 1} only: P@R20 is the full-recall precision.
        assert_eq!(precision_at_recall(&curve, 0.2).unwrap(), 0.5);
    }

    /// Independent step-sum: recompute counts from scratch at each distinct
    /// score by a full scan.
    fn ap_oracle(scores: &HashMap<PairKey, f64>, pool: &EvalPool) -> f64 {
        let mut gammas: Vec<f64> = pool
            .positives
            .iter()
            .chain(&pool.near)
            .chain(&pool.random)
            .map(|k| scores[k])
            .collect();
        gammas.sort_by(|a, b| b.total_cmp(a));
        gammas.dedup();
        let weight = if pool.random.is_empty() {
            0.0
        } else {
            pool.w_random as f64 / pool.random.len() as f64
        };
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for gamma in gammas {
            let tp = pool.positives.iter().filter(|k| scores[k] >= gamma).count() as f64;
            let near = pool.near.iter().filter(|k| scores[k] >= gamma).count() as f64;
            let rand = pool.random.iter().filter(|k| scores[k] >= gamma).count() as f64;
            let fp = near + weight * rand;
            let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let r = tp / pool.positives.len() as f64;
            ap += (r - prev_r) * p;
            prev_r = r;
        }
        ap
    }

    fn random_scored_pool(seed: u64) -> (EvalPool, HashMap<PairKey, f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let positives: Vec<PairKey> = (0..10u32).map(|i| PairKey { a: i, b: 100 + i }).collect();
        let near: Vec<PairKey> = (0..25u32).map(|i| PairKey { a: 200 + i, b: 300 + i }).collect();
        let random: Vec<PairKey> = (0..15u32).map(|i| PairKey { a: 400 + i, b: 500 + i }).collect();
        let mut scores = HashMap::new();
        for k in positives.iter().chain(&near).chain(&random) {
            // coarse grid forces score ties across pools
            scores.insert(*k, (rng.gen_range(0..20) as f64) / 20.0);
        }
        (
            EvalPool { positives, near, random, w_random: 60, random_clamped: false },
            scores,
        )
    }

    #[test]
    fn ap_matches_independent_step_sum() {
        for seed in 0..10 {
            let (pool, scores) = random_scored_pool(seed);
            let f = |k: &PairKey| scores[k];
            let curve = pr_curve(&f, &pool).unwrap();
            let want = ap_oracle(&scores, &pool);
            assert!((curve.ap - want).abs() < 1e-12, "seed {seed}: {} vs {want}", curve.ap);
            // spot-check precision_at_recall against the oracle curve
            for point in &curve.points {
                if point.recall >= 0.2 {
                    assert_eq!(precision_at_recall(&curve, 0.2).unwrap(), point.precision);
                    break;
                }
            }
        }
    }

    #[test]
    fn recall_is_monotone_and_counts_conserved() {
        for seed in 20..30 {
            let (pool, scores) = random_scored_pool(seed);
            let f = |k: &PairKey| scores[k];
            let curve = pr_curve(&f, &pool).unwrap();
            let mut prev = 0.0;
            for point in &curve.points {
                assert!(point.recall >= prev);
                prev = point.recall;
                assert_eq!(point.tp + point.fn_count, pool.positives.len() as u64);
                assert!(point.precision >= 0.0 && point.precision <= 1.0);
            }
            assert_eq!(curve.points.last().unwrap().recall, 1.0);
            assert!(curve.ap >= 0.0 && curve.ap <= 1.0);
        }
    }

    #[test]
    fn ap_is_invariant_under_strictly_monotone_transform() {
        for seed in 40..45 {
            let (pool, scores) = random_scored_pool(seed);
            let f = |k: &PairKey| scores[k];
            let g = |k: &PairKey| (scores[k] * 3.0 - 1.0).exp(); // strictly increasing
            let a = pr_curve(&f, &pool).unwrap().ap;
            let b = pr_curve(&g, &pool).unwrap().ap;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn manual_adjustment_bounds_and_example() {
        let counts = ThresholdCounts {
            tp: 5,
            fn_count: 2,
            near_firing: 30,
            random_firing: 2,
            w_random: 80,
            random_pool: 10,
        };
        // identity adjustment
        let id = ManualAdjustment::new(1.0, 1.0).unwrap();
        assert_eq!(adjusted_counts(&counts, &id).fp_hat_manual, counts.fp_hat());
        // zero adjustment: all putative errors were actually correct
        let zero = ManualAdjustment::new(0.0, 0.0).unwrap();
        let adj = adjusted_counts(&counts, &zero);
        assert_eq!(adj.fp_hat_manual, 0.0);
        assert_eq!(adj.precision, 1.0);
        // worked example: 0.36 * 30 + 0.67 * (80/10) * 2 = 21.52
        let manual = ManualAdjustment::new(0.36, 0.67).unwrap();
        let adj = adjusted_counts(&counts, &manual);
        assert!((adj.fp_hat_manual - 21.52).abs() < 1e-12);
        assert!(ManualAdjustment::new(1.2, 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn manual_fp_never_exceeds_estimated_fp(
            p_near in 0.0f64..=1.0,
            p_rand in 0.0f64..=1.0,
            near_firing in 0u64..100,
            random_firing in 0u64..20,
        ) {
            let counts = ThresholdCounts {
                tp: 3,
                fn_count: 1,
                near_firing,
                random_firing,
                w_random: 500,
                random_pool: 20,
            };
            let adj = adjusted_counts(
                &counts,
                &ManualAdjustment::new(p_near, p_rand).unwrap(),
            );
            proptest::prop_assert!(adj.fp_hat_manual <= counts.fp_hat() + 1e-12);
        }
    }

    #[test]
    fn estimator_mean_tracks_exact_fp() {
        // Small Monte Carlo sanity check; the acceptance suite runs the full
        // version. Fixed scores over a fully enumerated space.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(77);
        let space = PairSpace::symmetric((0..30).collect());
        let scores: HashMap<PairKey, f64> =
            space.iter().map(|k| (k, rng.gen_range(0.0..1.0))).collect();
        let positives: Vec<PairKey> = space.iter().take(15).collect();
        let positive_set: HashSet<PairKey> = positives.iter().copied().collect();
        let negatives: Vec<PairKey> =
            space.iter().filter(|k| !positive_set.contains(k)).collect();
        let near: Vec<PairKey> = negatives[..40].to_vec();
        let rest = &negatives[40..];
        let w_random = rest.len() as u64;
        let gamma = 0.6;
        let exact_fp = negatives.iter().filter(|k| scores[k] >= gamma).count() as f64;

        let draws = 200;
        let mut estimates = Vec::with_capacity(draws);
        for seed in 0..draws as u64 {
            let mut r = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let sample: Vec<PairKey> = (0..30)
                .map(|_| rest[r.gen_range(0..rest.len())])
                .collect(); // with replacement is fine for a mean check
            let pool = EvalPool {
                positives: positives.clone(),
                near: near.clone(),
                random: sample,
                w_random,
                random_clamped: false,
            };
            let f = |k: &PairKey| scores[k];
            estimates.push(counts_at_threshold(&f, &pool, gamma).unwrap().fp_hat());
        }
        let mean = estimates.iter().sum::<f64>() / draws as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - exact_fp).abs() <= 3.0 * se.max(1e-9),
            "mean {mean} vs exact {exact_fp} (se {se})"
        );
    }

    #[test]
    fn eval_pool_excludes_positives_everywhere() {
        let cfg = SyntheticConfig {
            n_clusters: 8,
            cluster_size: 4,
            n_distractors: 30,
            vocab: Default::default(),
            seed: 3,
        };
        let (corpus, oracle) = gen_synthetic(&cfg).unwrap();
        let model = EmbeddingModel::init(
            &ModelConfig { dim: 16, hash_buckets: 4096, ..Default::default() },
            9,
        )
        .unwrap();
        let space = PairSpace::symmetric((0..corpus.n_left() as u32).collect());
        let texts = |_right: bool, id: u32| corpus.left_text(id).to_string();
        let pool =
            build_eval_pool(&texts, &space, &oracle, &model, 100, 200, 5).unwrap();
        assert_eq!(pool.positives.len(), 8 * 6);
        for k in pool.near.iter().chain(&pool.random) {
            assert!(!oracle.label(k), "{k:?} is positive");
        }
        // no overlap between pools
        let near_set: HashSet<PairKey> = pool.near.iter().copied().collect();
        assert!(pool.random.iter().all(|k| !near_set.contains(k)));
        // closed-form weight: |space| - positives - |near|
        assert_eq!(
            pool.w_random,
            space.size() - pool.positives.len() as u64 - pool.near.len() as u64
        );
        // cross-check |negatives| by full enumeration
        let n_neg_enum = space.iter().filter(|k| !oracle.label(k)).count() as u64;
        assert_eq!(pool.w_random, n_neg_enum - pool.near.len() as u64);
    }

    #[test]
    fn near_covering_all_negatives_zeroes_the_weight() {
        let cfg = SyntheticConfig {
            n_clusters: 3,
            cluster_size: 3,
            n_distractors: 4,
            vocab: Default::default(),
            seed: 1,
        };
        let (corpus, oracle) = gen_synthetic(&cfg).unwrap();
        let model = EmbeddingModel::init(
            &ModelConfig { dim: 8, hash_buckets: 1024, ..Default::default() },
            2,
        )
        .unwrap();
        let space = PairSpace::symmetric((0..corpus.n_left() as u32).collect());
        let n_neg = (space.size() as usize) - 3 * 3;
        let texts = |_right: bool, id: u32| corpus.left_text(id).to_string();
        let pool = build_eval_pool(&texts, &space, &oracle, &model, n_neg, 10, 5).unwrap();
        assert_eq!(pool.near.len(), n_neg);
        assert_eq!(pool.w_random, 0);
        assert!(pool.random.is_empty());
        assert!(pool.random_clamped);
    }

    #[test]
    fn balanced_metrics_on_perfect_predictions() {
        let stated = StatedDataset::new(vec![
            (PairKey { a: 0, b: 1 }, true),
            (PairKey { a: 0, b: 2 }, false),
            (PairKey { a: 3, b: 4 }, true),
        ]);
        let scores = |k: &PairKey| if k.b == 2 { 0.1 } else { 0.9 };
        let report = balanced_metrics(&scores, &stated);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.f1, 1.0);
        // question 0 is clean (one positive, one negative), ranked correctly
        assert_eq!(report.n_clean_questions, 1);
        assert_eq!(report.c_map, Some(1.0));
    }

    #[test]
    fn c_map_single_clean_question_positive_first() {
        let stated = StatedDataset::new(vec![
            (PairKey::bipartite(0, 0), true),
            (PairKey::bipartite(0, 1), false),
            (PairKey::bipartite(0, 2), false),
        ]);
        let scores = |k: &PairKey| match k.b {
            0 => 0.9,
            1 => 0.5,
            _ => 0.3,
        };
        let report = balanced_metrics(&scores, &stated);
        assert_eq!(report.c_map, Some(1.0));
    }

    #[test]
    fn c_map_undefined_without_clean_questions() {
        let stated = StatedDataset::new(vec![
            (PairKey::bipartite(0, 0), true),
            (PairKey::bipartite(1, 1), false),
        ]);
        let report = balanced_metrics(&|_| 0.7, &stated);
        assert_eq!(report.c_map, None);
        assert_eq!(report.n_clean_questions, 0);
    }

    #[test]
    fn c_map_matches_per_question_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(13);
        let mut pairs = Vec::new();
        for q in 0..8u32 {
            for s in 0..6u32 {
                pairs.push((PairKey::bipartite(q, s), rng.gen_bool(0.3)));
            }
        }
        let stated = StatedDataset::new(pairs.clone());
        let scores: HashMap<PairKey, f64> = pairs
            .iter()
            .map(|(k, _)| (*k, rng.gen_range(0.0..1.0)))
            .collect();
        let f = |k: &PairKey| scores[k];
        let report = balanced_metrics(&f, &stated);

        // Brute-force MAP: for each clean question, sort and average
        // precision at each positive rank.
        let mut aps = Vec::new();
        for q in 0..8u32 {
            let mut qs: Vec<&(PairKey, bool)> =
                pairs.iter().filter(|(k, _)| k.a == q).collect();
            let n_pos = qs.iter().filter(|(_, l)| *l).count();
            if n_pos == 0 || n_pos == qs.len() {
                continue;
            }
            qs.sort_by(|x, y| scores[&y.0].total_cmp(&scores[&x.0]).then(x.0.cmp(&y.0)));
            let mut hits = 0;
            let mut ap = 0.0;
            for (rank, (_, label)) in qs.iter().enumerate() {
                if *label {
                    hits += 1;
                    ap += hits as f64 / (rank + 1) as f64;
                }
            }
            aps.push(ap / n_pos as f64);
        }
        let want = aps.iter().sum::<f64>() / aps.len() as f64;
        assert!((report.c_map.unwrap() - want).abs() < 1e-12);
        assert_eq!(report.n_clean_questions, aps.len());
    }
}
