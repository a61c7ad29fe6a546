//! Data-collection strategies and the round-based active-learning driver.
//!
//! Every strategy consumes the same labeling budget and produces a labeled
//! dataset plus a model trained on it. The two adaptive strategies retrain
//! from scratch each round on everything collected so far, rebuild the
//! nearest-neighbor index, and pick the next batch from the candidate pool;
//! the baselines select their whole dataset in one shot.

use crate::corpus::{
    sample_random_pairs, Corpus, LabelOracle, PairKey, PairSpace, StatedDataset,
};
use crate::embed::{
    refit_output_layer, train, EmbeddingModel, ModelConfig, TrainConfig, TrainPair,
};
use crate::eval::MetricsSummary;
use crate::index::{build_candidates, most_uncertain, top_scoring, CandidateSet, EmbeddingIndex};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// Exponential batch schedule: n_i = n1 * growth^(i-1), floored.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub n1: u64,
    /// Growth ratio as an exact rational (numerator, denominator).
    pub growth: (u64, u64),
    pub rounds: u32,
}

impl Default for ScheduleConfig {
    fn default() -> ScheduleConfig {
        ScheduleConfig {
            n1: 2048,
            growth: (3, 2),
            rounds: 10,
        }
    }
}

impl ScheduleConfig {
    /// Per-round batch sizes in exact rational arithmetic.
    pub fn batch_sizes(&self) -> Result<Vec<u64>> {
        if self.n1 < 1 || self.rounds < 1 || self.growth.0 < 1 || self.growth.1 < 1 {
            return Err(Error::InvalidConfig(
                "schedule needs n1 >= 1, rounds >= 1 and a positive growth ratio".into(),
            ));
        }
        let mut sizes = Vec::with_capacity(self.rounds as usize);
        let (num, den) = (self.growth.0 as u128, self.growth.1 as u128);
        let mut numerator = self.n1 as u128;
        let mut denominator = 1u128;
        for _ in 0..self.rounds {
            sizes.push((numerator / denominator) as u64);
            numerator = numerator
                .checked_mul(num)
                .ok_or_else(|| Error::InvalidConfig("schedule overflow".into()))?;
            denominator = denominator
                .checked_mul(den)
                .ok_or_else(|| Error::InvalidConfig("schedule overflow".into()))?;
        }
        Ok(sizes)
    }

    pub fn total_budget(&self) -> Result<u64> {
        Ok(self.batch_sizes()?.iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    StaticRetrieval,
    AdaptiveRetrieval,
    Uncertainty,
    Stated,
    StratifiedMatch,
    StratifiedAllPos,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::StaticRetrieval => "static_retrieval",
            StrategyKind::AdaptiveRetrieval => "adaptive_retrieval",
            StrategyKind::Uncertainty => "uncertainty",
            StrategyKind::Stated => "stated",
            StrategyKind::StratifiedMatch => "stratified_match",
            StrategyKind::StratifiedAllPos => "stratified_all_pos",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, StrategyKind::Uncertainty | StrategyKind::AdaptiveRetrieval)
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<StrategyKind> {
        Ok(match s {
            "random" => StrategyKind::Random,
            "static_retrieval" => StrategyKind::StaticRetrieval,
            "adaptive_retrieval" => StrategyKind::AdaptiveRetrieval,
            "uncertainty" => StrategyKind::Uncertainty,
            "stated" => StrategyKind::Stated,
            "stratified_match" => StrategyKind::StratifiedMatch,
            "stratified_all_pos" => StrategyKind::StratifiedAllPos,
            other => return Err(Error::InvalidConfig(format!("unknown strategy '{other}'"))),
        })
    }
}

/// Where the first batch comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    /// Top-n1 pairs by static-embedding cosine.
    Retrieval,
    /// The stated training dataset.
    Stated,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: bool,
    pub round: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub requested: u64,
    pub queried: u64,
    pub positives_in_batch: u64,
    pub cumulative_labeled: u64,
    pub cumulative_positives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_metrics: Option<MetricsSummary>,
}

/// Everything one run produces.
pub struct RunState {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub labeled: BTreeMap<PairKey, LabelRecord>,
    pub model: EmbeddingModel,
    pub rounds: Vec<RoundRecord>,
    pub planned_budget: u64,
    pub stopped_early: bool,
    /// False when every batch so far was single-class and the model is still
    /// the static initialization.
    pub trained: bool,
}

impl RunState {
    pub fn cumulative_positives(&self) -> u64 {
        self.labeled.values().filter(|r| r.label).count() as u64
    }

    pub fn class_counts(&self) -> (u64, u64) {
        let pos = self.cumulative_positives();
        (pos, self.labeled.len() as u64 - pos)
    }
}

/// Inputs shared by every strategy for one split.
pub struct RunContext<'a> {
    pub corpus: &'a Corpus,
    pub oracle: &'a LabelOracle,
    pub space: &'a PairSpace,
    /// Stated pairs restricted to this split; required by the stated strategy
    /// and the stated seed source.
    pub stated: Option<&'a StatedDataset>,
}

/// Per-round metrics hook: called with the model trained after each round.
pub type RoundEval<'a> = dyn Fn(&EmbeddingModel, u32) -> Result<MetricsSummary> + 'a;
/// Candidate-pool observer, for the optional debug dump.
pub type CandidateHook<'a> = dyn Fn(u32, &CandidateSet) -> Result<()> + 'a;

pub struct RunOptions<'a> {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// Neighbors retrieved per left utterance when building candidates.
    pub m: usize,
    pub seed_source: SeedSource,
    pub round_eval: Option<&'a RoundEval<'a>>,
    pub candidate_hook: Option<&'a CandidateHook<'a>>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            model_config: ModelConfig::default(),
            train_config: TrainConfig::default(),
            m: 100,
            seed_source: SeedSource::Retrieval,
            round_eval: None,
            candidate_hook: None,
        }
    }
}

/// Reference class counts for stratified matching.
#[derive(Debug, Clone, Copy)]
pub struct StratifiedReference {
    pub positives: u64,
    pub negatives: u64,
}

/// Deterministic sub-seed derivation (FNV mix of base, tag, and round).
fn derive_seed(base: u64, tag: &str, round: u32) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ base.rotate_left(17);
    for byte in tag.bytes().chain(round.to_le_bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct SideTexts<'a> {
    left: Vec<(u32, &'a str)>,
    right: Vec<(u32, &'a str)>,
}

fn side_texts<'a>(ctx: &RunContext<'a>, space: &PairSpace) -> SideTexts<'a> {
    let left = space
        .left_ids()
        .iter()
        .map(|&id| (id, ctx.corpus.left_text(id)))
        .collect();
    let right = space
        .right_ids()
        .iter()
        .map(|&id| (id, ctx.corpus.right_text(id)))
        .collect();
    SideTexts { left, right }
}

/// Top-n1 pairs by cosine under the given (static) model, exact.
///
/// Retrieves min(n1, side size) neighbors per left utterance, which
/// guarantees the global top-n1 is contained in the candidate pool. Returns
/// the whole pool when it is smaller than n1.
pub fn select_seed(
    static_model: &EmbeddingModel,
    ctx: &RunContext,
    n1: u64,
) -> Result<Vec<PairKey>> {
    let texts = side_texts(ctx, ctx.space);
    let index = EmbeddingIndex::build(static_model, &texts.right)?;
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let m = (n1 as usize).min(index.len()).max(1);
    let candidates = build_candidates(
        static_model,
        &index,
        &texts.left,
        ctx.space.mode(),
        m,
        &HashSet::new(),
        1,
    )?;
    Ok(top_scoring(&candidates, n1 as usize))
}

fn label_batch(
    ctx: &RunContext,
    labeled: &mut BTreeMap<PairKey, LabelRecord>,
    batch: &[PairKey],
    round: u32,
) -> u64 {
    let mut positives = 0u64;
    for key in batch {
        let label = ctx.oracle.label(key);
        positives += u64::from(label);
        let previous = labeled.insert(*key, LabelRecord { label, round });
        debug_assert!(previous.is_none(), "pair {key:?} labeled twice");
    }
    positives
}

/// Train a fresh model on everything labeled so far and refit its head.
/// Falls back to the static initialization while the labels are single-class
/// (training is undefined then); the run records this so callers can tell.
fn retrain(
    init: &EmbeddingModel,
    ctx: &RunContext,
    labeled: &BTreeMap<PairKey, LabelRecord>,
    cfg: &TrainConfig,
    round: u32,
    base_seed: u64,
) -> Result<(EmbeddingModel, bool)> {
    let pairs: Vec<TrainPair> = labeled
        .iter()
        .map(|(key, record)| TrainPair {
            a: ctx.corpus.left_text(key.a),
            b: ctx.corpus.right_text(key.b),
            label: record.label,
        })
        .collect();
    let n_pos = pairs.iter().filter(|p| p.label).count();
    if n_pos == 0 || n_pos == pairs.len() {
        return Ok((init.clone(), false));
    }
    let mut model = init.clone();
    let mut cfg = *cfg;
    cfg.seed = derive_seed(base_seed, "train", round);
    train(&mut model, &pairs, &cfg)?;
    refit_output_layer(&mut model, &pairs)?;
    Ok((model, true))
}

/// The round-based active-learning loop (uncertainty sampling or adaptive
/// retrieval).
///
/// Round 1 is the seed batch. Every round trains a fresh model on all labels
/// collected so far, rebuilds the index, scores candidates excluding labeled
/// pairs, and queries the oracle for the next batch. Deterministic given the
/// seed. Stops early when the candidate pool is exhausted.
pub fn run_active_learning(
    ctx: &RunContext,
    schedule: &ScheduleConfig,
    strategy: StrategyKind,
    opts: &RunOptions,
    seed: u64,
) -> Result<RunState> {
    if !strategy.is_adaptive() {
        return Err(Error::InvalidConfig(format!(
            "run_active_learning needs an adaptive strategy, got {}",
            strategy.as_str()
        )));
    }
    let sizes = schedule.batch_sizes()?;
    let planned_budget: u64 = sizes.iter().sum();
    let init = EmbeddingModel::init(&opts.model_config, derive_seed(seed, "init", 0))?;
    let texts = side_texts(ctx, ctx.space);

    let mut labeled: BTreeMap<PairKey, LabelRecord> = BTreeMap::new();
    let mut current = init.clone();
    let mut trained = false;
    let mut rounds = Vec::with_capacity(sizes.len());
    let mut stopped_early = false;
    let mut cumulative_positives = 0u64;

    for (idx, &n_i) in sizes.iter().enumerate() {
        let round = idx as u32 + 1;
        let batch: Vec<PairKey> = if round == 1 {
            match opts.seed_source {
                SeedSource::Retrieval => select_seed(&init, ctx, n_i)?,
                SeedSource::Stated => {
                    let stated = ctx.stated.ok_or_else(|| {
                        Error::MissingReference("stated seed requested but no stated dataset".into())
                    })?;
                    stated.pairs().iter().map(|(k, _)| *k).collect()
                }
            }
        } else {
            let exclude: HashSet<PairKey> = labeled.keys().copied().collect();
            let index = EmbeddingIndex::build(&current, &texts.right)?;
            let candidates = build_candidates(
                &current,
                &index,
                &texts.left,
                ctx.space.mode(),
                opts.m,
                &exclude,
                round,
            )?;
            if let Some(hook) = opts.candidate_hook {
                hook(round, &candidates)?;
            }
            match strategy {
                StrategyKind::Uncertainty => most_uncertain(&candidates, n_i as usize),
                _ => top_scoring(&candidates, n_i as usize),
            }
        };

        if batch.is_empty() {
            stopped_early = true;
            break;
        }
        let requested = if round == 1 && opts.seed_source == SeedSource::Stated {
            batch.len() as u64
        } else {
            n_i
        };
        let positives_in_batch = label_batch(ctx, &mut labeled, &batch, round);
        cumulative_positives += positives_in_batch;

        let (model, did_train) = retrain(&init, ctx, &labeled, &opts.train_config, round, seed)?;
        current = model;
        trained = did_train;

        let dev_metrics = match opts.round_eval {
            Some(eval) => Some(eval(&current, round)?),
            None => None,
        };
        rounds.push(RoundRecord {
            round,
            requested,
            queried: batch.len() as u64,
            positives_in_batch,
            cumulative_labeled: labeled.len() as u64,
            cumulative_positives,
            dev_metrics,
        });
        if (batch.len() as u64) < requested {
            stopped_early = true;
            break;
        }
    }

    Ok(RunState {
        strategy,
        seed,
        labeled,
        model: current,
        rounds,
        planned_budget,
        stopped_early,
        trained,
    })
}

/// One-shot baselines: the whole dataset is selected up front, a model is
/// trained on it once.
pub fn run_baseline(
    ctx: &RunContext,
    budget: u64,
    kind: StrategyKind,
    opts: &RunOptions,
    seed: u64,
    reference: Option<StratifiedReference>,
) -> Result<RunState> {
    let init = EmbeddingModel::init(&opts.model_config, derive_seed(seed, "init", 0))?;
    let batch: Vec<PairKey> = match kind {
        StrategyKind::Random => {
            let count = budget.min(ctx.space.size());
            sample_random_pairs(ctx.space, count, &HashSet::new(), derive_seed(seed, "random", 0))?
        }
        StrategyKind::StaticRetrieval => select_seed(&init, ctx, budget)?,
        StrategyKind::Stated => {
            let stated = ctx.stated.ok_or_else(|| {
                Error::MissingReference("stated strategy needs a stated dataset".into())
            })?;
            stated.pairs().iter().map(|(k, _)| *k).collect()
        }
        StrategyKind::StratifiedMatch => {
            let reference = reference.ok_or_else(|| {
                Error::MissingReference(
                    "stratified_match needs reference class counts from an adaptive run".into(),
                )
            })?;
            let mut batch = sample_positives(ctx, reference.positives, seed)?;
            let positive_set: HashSet<PairKey> =
                ctx.oracle.positives_in(ctx.space).into_iter().collect();
            batch.extend(sample_random_pairs(
                ctx.space,
                reference.negatives.min(ctx.space.size() - positive_set.len() as u64),
                &positive_set,
                derive_seed(seed, "strat-neg", 0),
            )?);
            batch
        }
        StrategyKind::StratifiedAllPos => {
            let positives = ctx.oracle.positives_in(ctx.space);
            let positive_set: HashSet<PairKey> = positives.iter().copied().collect();
            let n_negatives = budget
                .saturating_sub(positives.len() as u64)
                .min(ctx.space.size() - positive_set.len() as u64);
            let mut batch = positives;
            batch.extend(sample_random_pairs(
                ctx.space,
                n_negatives,
                &positive_set,
                derive_seed(seed, "strat-neg", 0),
            )?);
            batch
        }
        adaptive => {
            return Err(Error::InvalidConfig(format!(
                "{} is not a one-shot baseline",
                adaptive.as_str()
            )));
        }
    };

    let mut labeled = BTreeMap::new();
    let positives_in_batch = label_batch(ctx, &mut labeled, &batch, 1);
    let (model, trained) = retrain(&init, ctx, &labeled, &opts.train_config, 1, seed)?;
    let dev_metrics = match opts.round_eval {
        Some(eval) => Some(eval(&model, 1)?),
        None => None,
    };
    let queried = batch.len() as u64;
    Ok(RunState {
        strategy: kind,
        seed,
        model,
        rounds: vec![RoundRecord {
            round: 1,
            requested: budget,
            queried,
            positives_in_batch,
            cumulative_labeled: queried,
            cumulative_positives: positives_in_batch,
            dev_metrics,
        }],
        labeled,
        planned_budget: budget,
        stopped_early: queried < budget && kind != StrategyKind::Stated,
        trained,
    })
}

fn sample_positives(ctx: &RunContext, count: u64, seed: u64) -> Result<Vec<PairKey>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut positives = ctx.oracle.positives_in(ctx.space);
    if count > positives.len() as u64 {
        return Err(Error::SampleExhausted {
            requested: count,
            available: positives.len() as u64,
        });
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(derive_seed(seed, "strat-pos", 0));
    positives.shuffle(&mut rng);
    positives.truncate(count as usize);
    Ok(positives)
}
