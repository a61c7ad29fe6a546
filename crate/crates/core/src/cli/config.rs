//! Experiment configuration: a single TOML file with sections mirroring the
//! pipeline stages. Every default is baked in so a synthetic run needs no
//! config at all.

use crate::corpus::{PairMode, Split, SyntheticConfig, VocabConfig};
use crate::embed::{ModelConfig, TrainConfig};
use crate::strategies::{ScheduleConfig, SeedSource, StrategyKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSection,
    pub schedule: ScheduleConfig,
    pub train: TrainSection,
    pub run: RunSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            corpus: CorpusSection::default(),
            schedule: ScheduleConfig::default(),
            train: TrainSection::default(),
            run: RunSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    /// Utterance TSV; unset means synthetic.
    pub utterances: Option<PathBuf>,
    /// Stated-pairs TSV, required with `utterances`.
    pub pairs: Option<PathBuf>,
    pub mode: PairMode,
    /// Synthetic generator parameters, used when no files are given.
    pub synthetic: SyntheticSection,
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
}

impl Default for CorpusSection {
    fn default() -> CorpusSection {
        CorpusSection {
            utterances: None,
            pairs: None,
            mode: PairMode::Symmetric,
            synthetic: SyntheticSection::default(),
            split_fractions: [0.6, 0.2, 0.2],
            split_seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSection {
    pub clusters: usize,
    pub cluster_size: usize,
    pub distractors: usize,
    pub seed: u64,
    pub content_vocab: usize,
    pub template_tokens: usize,
    pub content_per_utterance: usize,
    pub noise_vocab: usize,
    pub noise_per_utterance: usize,
    pub near_duplicate_every: usize,
    /// Stated negatives sampled alongside the positives (per positive).
    pub stated_negatives_per_positive: f64,
}

impl Default for SyntheticSection {
    fn default() -> SyntheticSection {
        let vocab = VocabConfig::default();
        SyntheticSection {
            clusters: 50,
            cluster_size: 4,
            distractors: 1800,
            seed: 13,
            content_vocab: vocab.content_vocab,
            template_tokens: vocab.template_tokens,
            content_per_utterance: vocab.content_per_utterance,
            noise_vocab: vocab.noise_vocab,
            noise_per_utterance: vocab.noise_per_utterance,
            near_duplicate_every: vocab.near_duplicate_every,
            stated_negatives_per_positive: 1.0,
        }
    }
}

impl SyntheticSection {
    pub fn to_generator_config(self) -> SyntheticConfig {
        SyntheticConfig {
            n_clusters: self.clusters,
            cluster_size: self.cluster_size,
            n_distractors: self.distractors,
            vocab: VocabConfig {
                content_vocab: self.content_vocab,
                template_tokens: self.template_tokens,
                content_per_utterance: self.content_per_utterance,
                noise_vocab: self.noise_vocab,
                noise_per_utterance: self.noise_per_utterance,
                near_duplicate_every: self.near_duplicate_every,
            },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub dim: usize,
    pub hash_buckets: u32,
    pub max_tokens: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub head_lr_multiplier: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        TrainSection {
            dim: model.dim,
            hash_buckets: model.hash_buckets,
            max_tokens: model.max_tokens,
            bn_momentum: model.bn_momentum,
            bn_epsilon: model.bn_epsilon,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            head_lr_multiplier: train.head_lr_multiplier,
            beta1: train.beta1,
            beta2: train.beta2,
            adam_epsilon: train.adam_epsilon,
        }
    }
}

impl TrainSection {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            hash_buckets: self.hash_buckets,
            lowercase: true,
            hash_seed: 0,
            max_tokens: self.max_tokens,
            bn_momentum: self.bn_momentum,
            bn_epsilon: self.bn_epsilon,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            head_lr_multiplier: self.head_lr_multiplier,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Nearest neighbors retrieved per left utterance.
    pub m: usize,
    pub out_dir: PathBuf,
    pub seed_source: SeedSource,
    /// Split evaluated after every round; None disables per-round metrics.
    pub round_eval_split: Option<Split>,
    /// Split evaluated with the final model.
    pub final_eval_split: Split,
    /// Dump each round's candidate pool next to the run log.
    pub dump_candidates: bool,
}

impl Default for RunSection {
    fn default() -> RunSection {
        RunSection {
            strategies: vec![
                StrategyKind::Uncertainty,
                StrategyKind::AdaptiveRetrieval,
                StrategyKind::StaticRetrieval,
                StrategyKind::Random,
            ],
            seeds: vec![0, 1, 2],
            m: 1000,
            out_dir: PathBuf::from("runs"),
            seed_source: SeedSource::Retrieval,
            round_eval_split: None,
            final_eval_split: Split::Test,
            dump_candidates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Near negatives per left utterance of the evaluated split.
    pub near_per_utterance: usize,
    pub random_size: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        EvalSection {
            near_per_utterance: 10,
            random_size: 2000,
            seed: 1729,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&raw)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("serializing config: {e}")))?;
        std::fs::write(path, raw)?;
        Ok(())
    }

    /// The desk-scale synthetic preset: the reference corpus with a schedule
    /// and pools sized to it.
    pub fn synthetic_preset() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.schedule = ScheduleConfig { n1: 64, growth: (3, 2), rounds: 6 };
        config.train.hash_buckets = 1 << 14;
        config.run.m = 50;
        config.run.round_eval_split = Some(Split::Test);
        config.eval.random_size = 2000;
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.utterances.is_some() != self.corpus.pairs.is_some() {
            return Err(Error::InvalidConfig(
                "utterances and pairs files must be given together".into(),
            ));
        }
        if let Some(path) = &self.corpus.utterances {
            for p in [path, self.corpus.pairs.as_ref().unwrap()] {
                if !p.exists() {
                    return Err(Error::InvalidConfig(format!(
                        "referenced path does not exist: {}",
                        p.display()
                    )));
                }
            }
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.run.strategies.is_empty() {
            return Err(Error::InvalidConfig("at least one strategy is required".into()));
        }
        self.schedule.batch_sizes()?;
        Ok(())
    }
}
