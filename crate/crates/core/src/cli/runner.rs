//! Experiment orchestration: corpus preparation, per-cell execution, and
//! artifact persistence. Every artifact is deterministic for a fixed config:
//! no timestamps, fixed field orders, seeded randomness only.

use super::config::ExperimentConfig;
use crate::corpus::{
    gen_synthetic, ingest, sample_random_pairs, split_corpus, write_pairs_tsv,
    write_utterances_tsv, Corpus, LabelOracle, PairKey, PairMode, PairSpace, Split, SplitSpec,
    StatedDataset,
};
use crate::embed::EmbeddingModel;
use crate::eval::{
    balanced_metrics, pr_curve, score_pool, summarize, BalancedReport, EvalPool, MetricsSummary,
    PRCurve,
};
use crate::strategies::{
    run_active_learning, run_baseline, RunContext, RunOptions, RunState, StrategyKind,
    StratifiedReference,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Corpus, oracle, stated pairs and split, ready to run.
pub struct PreparedCorpus {
    pub corpus: Corpus,
    pub oracle: LabelOracle,
    pub stated: StatedDataset,
    pub split: SplitSpec,
    pub fingerprint: String,
}

impl PreparedCorpus {
    pub fn space(&self, split: Split) -> PairSpace {
        self.split.space(split)
    }

    pub fn texts(&self) -> impl Fn(bool, u32) -> String + '_ {
        move |right, id| {
            if right {
                self.corpus.right_text(id).to_string()
            } else {
                self.corpus.left_text(id).to_string()
            }
        }
    }
}

fn fnv(bytes: impl IntoIterator<Item = u8>, state: &mut u64) {
    for byte in bytes {
        *state ^= byte as u64;
        *state = state.wrapping_mul(0x100000001b3);
    }
}

/// Load or generate the corpus and split it. The synthetic path derives a
/// stated dataset (all within-cluster positives plus sampled negatives) so
/// splitting keeps clusters atomic and stated-data workflows stay available.
pub fn prepare_corpus(config: &ExperimentConfig) -> Result<PreparedCorpus> {
    let section = &config.corpus;
    let (corpus, stated, oracle) = match (&section.utterances, &section.pairs) {
        (Some(utt), Some(pairs)) => {
            let (corpus, stated, oracle, report) = ingest(utt, pairs, section.mode)?;
            eprintln!(
                "ingested {} left / {} right utterances, {} stated positives, {} stated negatives",
                report.n_left, report.n_right, report.stated_positive, report.stated_negative
            );
            (corpus, stated, oracle)
        }
        _ => {
            let gen_cfg = section.synthetic.to_generator_config();
            let (corpus, oracle) = gen_synthetic(&gen_cfg)?;
            let space = PairSpace::symmetric((0..corpus.n_left() as u32).collect());
            let positives = oracle.positives_in(&space);
            let n_negatives = (positives.len() as f64
                * section.synthetic.stated_negatives_per_positive)
                .round() as u64;
            let exclude: HashSet<PairKey> = positives.iter().copied().collect();
            let negatives = sample_random_pairs(
                &space,
                n_negatives.min(space.size() - exclude.len() as u64),
                &exclude,
                gen_cfg.seed ^ 0x5f5f5f5f,
            )?;
            let mut pairs: Vec<(PairKey, bool)> =
                positives.into_iter().map(|k| (k, true)).collect();
            pairs.extend(negatives.into_iter().map(|k| (k, false)));
            (corpus, StatedDataset::new(pairs), oracle)
        }
    };

    let split = split_corpus(&corpus, &stated, section.split_fractions, section.split_seed)?;
    if split.oversized_components > 0 {
        eprintln!(
            "warning: {} component(s) exceed the largest split target; assigned to the largest split",
            split.oversized_components
        );
    }

    let mut h: u64 = 0xcbf29ce484222325;
    fnv(
        [match corpus.mode() {
            PairMode::Symmetric => 0u8,
            PairMode::Bipartite => 1,
        }],
        &mut h,
    );
    for store in [corpus.left(), corpus.right()] {
        for u in store {
            fnv(u.text.bytes(), &mut h);
            fnv([b'\n'], &mut h);
        }
    }
    for node in 0..corpus.n_nodes() {
        fnv([split.split_of_node(node) as u8], &mut h);
    }
    fnv(config.eval.seed.to_le_bytes(), &mut h);

    Ok(PreparedCorpus {
        corpus,
        oracle,
        stated,
        split,
        fingerprint: format!("{h:016x}"),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellMetrics {
    pub all_pairs: MetricsSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced: Option<BalancedReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub corpus_fingerprint: String,
    pub planned_budget: u64,
    pub labeled: u64,
    pub positives: u64,
    pub stopped_early: bool,
    pub trained: bool,
    pub rounds: u32,
    pub m: usize,
    pub final_eval_split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub ap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_at_r20: Option<f64>,
    pub positives_collected: u64,
    pub labeled: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySummary {
    pub per_seed: Vec<SeedOutcome>,
    pub mean_ap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_p_at_r20: Option<f64>,
    pub mean_positives: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub corpus_fingerprint: String,
    pub total_budget: u64,
    pub strategies: BTreeMap<StrategyKind, StrategySummary>,
}

struct EvalSetup {
    pools: BTreeMap<Split, EvalPool>,
}

impl EvalSetup {
    fn evaluate(
        &self,
        prepared: &PreparedCorpus,
        model: &EmbeddingModel,
        split: Split,
    ) -> Result<(PRCurve, MetricsSummary)> {
        let pool = &self.pools[&split];
        let texts = prepared.texts();
        let scores = score_pool(model, &texts, pool, prepared.corpus.mode())?;
        let f = |k: &PairKey| scores[k];
        let curve = pr_curve(&f, pool)?;
        let summary = summarize(&curve, pool);
        Ok((curve, summary))
    }
}

fn build_eval_setup(config: &ExperimentConfig, prepared: &PreparedCorpus) -> Result<EvalSetup> {
    let mut needed: Vec<Split> = vec![config.run.final_eval_split];
    if let Some(split) = config.run.round_eval_split {
        if !needed.contains(&split) {
            needed.push(split);
        }
    }
    // One static embedder, fixed by the eval seed, defines the near pools for
    // every cell so results stay comparable across strategies and seeds.
    let static_model = EmbeddingModel::init(&config.train.model_config(), config.eval.seed)?;
    let texts = prepared.texts();
    let mut pools = BTreeMap::new();
    for split in needed {
        let space = prepared.space(split);
        let near_size = config.eval.near_per_utterance * space.left_ids().len();
        let pool = crate::eval::build_eval_pool(
            &texts,
            &space,
            &prepared.oracle,
            &static_model,
            near_size,
            config.eval.random_size,
            config.eval.seed,
        )?;
        pools.insert(split, pool);
    }
    Ok(EvalSetup { pools })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut raw = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serializing {}: {e}", path.display())))?;
    raw.push('\n');
    std::fs::write(path, raw)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path)?;
    serde_json::from_str(&raw)
        .map_err(|e| Error::InvalidConfig(format!("parsing {}: {e}", path.display())))
}

fn write_run_log(path: &Path, state: &RunState) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in &state.rounds {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidConfig(format!("serializing round record: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn write_pr_curve_csv(path: &Path, curve: &PRCurve) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "threshold,tp,fp_hat,fn,precision,recall")?;
    for p in &curve.points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.threshold, p.tp, p.fp_hat, p.fn_count, p.precision, p.recall
        )?;
    }
    Ok(())
}

fn write_candidates_tsv(path: &Path, set: &crate::index::CandidateSet) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in &set.candidates {
        writeln!(w, "{}\t{}\t{}\t{}", c.key.a, c.key.b, c.cosine, c.prob)?;
    }
    Ok(())
}

/// Execute one (strategy, seed) cell and write its artifacts.
fn run_cell(
    config: &ExperimentConfig,
    prepared: &PreparedCorpus,
    eval_setup: &EvalSetup,
    strategy: StrategyKind,
    seed: u64,
    reference: Option<StratifiedReference>,
) -> Result<(RunState, CellMetrics)> {
    let cell_dir = config
        .run
        .out_dir
        .join(strategy.as_str())
        .join(seed.to_string());
    std::fs::create_dir_all(&cell_dir)?;

    let train_space = prepared.space(Split::Train);
    let stated_train = prepared.stated.restrict_to(&train_space);
    let ctx = RunContext {
        corpus: &prepared.corpus,
        oracle: &prepared.oracle,
        space: &train_space,
        stated: (!stated_train.is_empty()).then_some(&stated_train),
    };

    let round_eval_split = config.run.round_eval_split;
    let round_eval = round_eval_split.map(|split| {
        move |model: &EmbeddingModel, _round: u32| -> Result<MetricsSummary> {
            let (_, summary) = eval_setup.evaluate(prepared, model, split)?;
            Ok(summary)
        }
    });
    let dump_dir = cell_dir.clone();
    let candidate_hook = config.run.dump_candidates.then_some(
        move |round: u32, set: &crate::index::CandidateSet| -> Result<()> {
            write_candidates_tsv(&dump_dir.join(format!("candidates_round_{round}.tsv")), set)
        },
    );
    let opts = RunOptions {
        model_config: config.train.model_config(),
        train_config: config.train.train_config(),
        m: config.run.m,
        seed_source: config.run.seed_source,
        round_eval: round_eval
            .as_ref()
            .map(|f| f as &crate::strategies::RoundEval),
        candidate_hook: candidate_hook
            .as_ref()
            .map(|f| f as &crate::strategies::CandidateHook),
    };

    let budget = config.schedule.total_budget()?;
    let state = if strategy.is_adaptive() {
        run_active_learning(&ctx, &config.schedule, strategy, &opts, seed)?
    } else {
        let budget = if strategy == StrategyKind::Stated {
            stated_train.len() as u64
        } else {
            budget
        };
        run_baseline(&ctx, budget, strategy, &opts, seed, reference)?
    };

    // Final evaluation on the configured split.
    let (curve, all_pairs) =
        eval_setup.evaluate(prepared, &state.model, config.run.final_eval_split)?;
    let balanced = {
        let final_space = prepared.space(config.run.final_eval_split);
        let stated_eval = prepared.stated.restrict_to(&final_space);
        if stated_eval.is_empty() {
            None
        } else {
            let texts = prepared.texts();
            let scores =
                crate::eval::score_stated(&state.model, &texts, &stated_eval, prepared.corpus.mode())?;
            let f = |k: &PairKey| scores[k];
            Some(balanced_metrics(&f, &stated_eval))
        }
    };
    let metrics = CellMetrics { all_pairs, balanced };

    // Artifacts.
    write_run_log(&cell_dir.join("run_log.jsonl"), &state)?;
    let labeled: Vec<(PairKey, bool)> = state
        .labeled
        .iter()
        .map(|(k, r)| (*k, r.label))
        .collect();
    write_pairs_tsv(&cell_dir.join("labeled.tsv"), &labeled)?;
    state.model.save(&cell_dir.join("model.bin"))?;
    write_json(&cell_dir.join("metrics.json"), &metrics)?;
    write_pr_curve_csv(&cell_dir.join("pr_curve.csv"), &curve)?;
    let (positives, _) = state.class_counts();
    write_json(
        &cell_dir.join("manifest.json"),
        &Manifest {
            strategy,
            seed,
            corpus_fingerprint: prepared.fingerprint.clone(),
            planned_budget: state.planned_budget,
            labeled: state.labeled.len() as u64,
            positives,
            stopped_early: state.stopped_early,
            trained: state.trained,
            rounds: state.rounds.len() as u32,
            m: config.run.m,
            final_eval_split: config.run.final_eval_split,
        },
    )?;
    Ok((state, metrics))
}

/// Run every (strategy, seed) cell of the config and aggregate a summary.
///
/// Stratified matching takes its reference class counts from the uncertainty
/// run of the same seed, so uncertainty cells execute first when needed.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let prepared = prepare_corpus(config)?;
    let eval_setup = build_eval_setup(config, &prepared)?;
    std::fs::create_dir_all(&config.run.out_dir)?;

    let strategies = &config.run.strategies;
    let needs_reference = strategies.contains(&StrategyKind::StratifiedMatch);
    if needs_reference && !strategies.contains(&StrategyKind::Uncertainty) {
        return Err(Error::MissingReference(
            "stratified_match requires uncertainty in the strategy list".into(),
        ));
    }

    let mut references: HashMap<u64, StratifiedReference> = HashMap::new();
    let mut outcomes: BTreeMap<StrategyKind, Vec<(u64, RunState, CellMetrics)>> = BTreeMap::new();
    let mut ordered: Vec<StrategyKind> = Vec::new();
    for &s in strategies {
        if s == StrategyKind::Uncertainty {
            ordered.insert(0, s);
        } else {
            ordered.push(s);
        }
    }
    for strategy in ordered {
        for &seed in &config.run.seeds {
            let reference = (strategy == StrategyKind::StratifiedMatch)
                .then(|| references.get(&seed).copied())
                .flatten();
            if strategy == StrategyKind::StratifiedMatch && reference.is_none() {
                return Err(Error::MissingReference(format!(
                    "no uncertainty reference for seed {seed}"
                )));
            }
            eprintln!("running {} seed {seed}", strategy.as_str());
            let (state, metrics) =
                run_cell(config, &prepared, &eval_setup, strategy, seed, reference)?;
            if strategy == StrategyKind::Uncertainty {
                let (positives, negatives) = state.class_counts();
                references.insert(seed, StratifiedReference { positives, negatives });
            }
            outcomes.entry(strategy).or_default().push((seed, state, metrics));
        }
    }

    let mut summary = RunSummary {
        corpus_fingerprint: prepared.fingerprint.clone(),
        total_budget: config.schedule.total_budget()?,
        strategies: BTreeMap::new(),
    };
    for (strategy, cells) in &outcomes {
        let per_seed: Vec<SeedOutcome> = cells
            .iter()
            .map(|(seed, state, metrics)| SeedOutcome {
                seed: *seed,
                ap: metrics.all_pairs.ap,
                p_at_r20: metrics.all_pairs.p_at_r20,
                positives_collected: state.cumulative_positives(),
                labeled: state.labeled.len() as u64,
            })
            .collect();
        let n = per_seed.len() as f64;
        let mean_ap = per_seed.iter().map(|o| o.ap).sum::<f64>() / n;
        let p20: Vec<f64> = per_seed.iter().filter_map(|o| o.p_at_r20).collect();
        let mean_p_at_r20 = (!p20.is_empty())
            .then(|| p20.iter().sum::<f64>() / p20.len() as f64);
        let mean_positives =
            per_seed.iter().map(|o| o.positives_collected as f64).sum::<f64>() / n;
        summary.strategies.insert(
            *strategy,
            StrategySummary { per_seed, mean_ap, mean_p_at_r20, mean_positives },
        );
    }
    write_json(&config.run.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Generate a synthetic corpus on disk: utterances.tsv plus a stated pairs
/// file (all within-cluster positives and sampled random negatives).
pub fn cmd_gen(
    section: &super::config::SyntheticSection,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let gen_cfg = section.to_generator_config();
    let (corpus, oracle) = gen_synthetic(&gen_cfg)?;
    let space = PairSpace::symmetric((0..corpus.n_left() as u32).collect());
    let positives = oracle.positives_in(&space);
    let n_negatives =
        (positives.len() as f64 * section.stated_negatives_per_positive).round() as u64;
    let exclude: HashSet<PairKey> = positives.iter().copied().collect();
    let negatives = sample_random_pairs(
        &space,
        n_negatives.min(space.size() - exclude.len() as u64),
        &exclude,
        gen_cfg.seed ^ 0x5f5f5f5f,
    )?;
    let mut pairs: Vec<(PairKey, bool)> = positives.into_iter().map(|k| (k, true)).collect();
    pairs.extend(negatives.into_iter().map(|k| (k, false)));

    std::fs::create_dir_all(out_dir)?;
    let utt_path = out_dir.join("utterances.tsv");
    let pairs_path = out_dir.join("pairs.tsv");
    write_utterances_tsv(&utt_path, &corpus)?;
    write_pairs_tsv(&pairs_path, &pairs)?;
    eprintln!(
        "wrote {} utterances, {} stated pairs ({} positive)",
        corpus.n_left(),
        pairs.len(),
        pairs.iter().filter(|(_, l)| *l).count()
    );
    Ok((utt_path, pairs_path))
}

/// Evaluate an existing checkpoint on a corpus (whole or one split).
pub fn cmd_eval(
    model_path: &Path,
    config: &ExperimentConfig,
    split: Option<Split>,
    out_dir: &Path,
) -> Result<CellMetrics> {
    let model = EmbeddingModel::load(model_path)?;
    let prepared = prepare_corpus(config)?;
    let space = match split {
        Some(split) => prepared.space(split),
        None => match prepared.corpus.mode() {
            PairMode::Symmetric => {
                PairSpace::symmetric((0..prepared.corpus.n_left() as u32).collect())
            }
            PairMode::Bipartite => PairSpace::bipartite(
                (0..prepared.corpus.n_left() as u32).collect(),
                (0..prepared.corpus.n_right() as u32).collect(),
            ),
        },
    };
    let static_model = EmbeddingModel::init(&config.train.model_config(), config.eval.seed)?;
    let texts = prepared.texts();
    let near_size = config.eval.near_per_utterance * space.left_ids().len();
    let pool = crate::eval::build_eval_pool(
        &texts,
        &space,
        &prepared.oracle,
        &static_model,
        near_size,
        config.eval.random_size,
        config.eval.seed,
    )?;
    let scores = score_pool(&model, &texts, &pool, prepared.corpus.mode())?;
    let f = |k: &PairKey| scores[k];
    let curve = pr_curve(&f, &pool)?;
    let all_pairs = summarize(&curve, &pool);
    let stated_eval = prepared.stated.restrict_to(&space);
    let balanced = if stated_eval.is_empty() {
        None
    } else {
        let scores =
            crate::eval::score_stated(&model, &texts, &stated_eval, prepared.corpus.mode())?;
        let f = |k: &PairKey| scores[k];
        Some(balanced_metrics(&f, &stated_eval))
    };
    let metrics = CellMetrics { all_pairs, balanced };
    std::fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("metrics.json"), &metrics)?;
    write_pr_curve_csv(&out_dir.join("pr_curve.csv"), &curve)?;
    Ok(metrics)
}
