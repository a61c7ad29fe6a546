//! Command-line interface: `gen`, `run`, `eval`, `report`.

mod config;
mod report;
mod runner;

pub use config::{
    CorpusSection, EvalSection, ExperimentConfig, RunSection, SyntheticSection, TrainSection,
};
pub use report::{cmd_report, collect_cells, CellData, EfficiencyReport, ReportOutput};
pub use runner::{
    cmd_eval, cmd_gen, cmd_run, prepare_corpus, read_json, CellMetrics, Manifest, PreparedCorpus,
    RunSummary, SeedOutcome, StrategySummary,
};

use crate::corpus::{PairMode, Split};
use crate::strategies::{SeedSource, StrategyKind};
use crate::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "pairlearn",
    about = "Active-learning data collection and all-pairs evaluation for imbalanced pairwise tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic clustered corpus as TSV files.
    Gen(GenArgs),
    /// Run data-collection strategies end to end and write run artifacts.
    Run(RunArgs),
    /// Evaluate a saved model checkpoint on a corpus.
    Eval(EvalArgs),
    /// Aggregate completed runs into curves, tables, and efficiency ratios.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Output directory for utterances.tsv and pairs.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub clusters: usize,
    #[arg(long, default_value_t = 4)]
    pub cluster_size: usize,
    #[arg(long, default_value_t = 1800)]
    pub distractors: usize,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Stated negatives written per positive pair.
    #[arg(long, default_value_t = 1.0)]
    pub stated_negatives_per_positive: f64,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment config (TOML). Defaults apply for anything omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the desk-scale synthetic preset instead of a config file.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated strategy list, e.g. uncertainty,random.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<StrategyKind>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Per-round evaluation split: train, dev, test, or none.
    #[arg(long)]
    pub round_eval: Option<String>,
    /// Dump each round's candidate pool as TSV.
    #[arg(long)]
    pub dump_candidates: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub utterances: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "symmetric")]
    pub mode: String,
    /// Evaluate one split (train/dev/test) or the whole corpus (all).
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub near_per_utterance: usize,
    #[arg(long, default_value_t = 2000)]
    pub random_size: usize,
    #[arg(long, default_value_t = 1729)]
    pub eval_seed: u64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run roots (directories containing <strategy>/<seed>/ cells).
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, self.synthetic) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, _) => ExperimentConfig::synthetic_preset(),
        };
        if let Some(out) = &self.out {
            config.run.out_dir = out.clone();
        }
        if let Some(strategies) = &self.strategies {
            config.run.strategies = strategies.clone();
        }
        if let Some(seeds) = &self.seeds {
            config.run.seeds = seeds.clone();
        }
        if let Some(n1) = self.n1 {
            config.schedule.n1 = n1;
        }
        if let Some(rounds) = self.rounds {
            config.schedule.rounds = rounds;
        }
        if let Some(m) = self.m {
            config.run.m = m;
        }
        if let Some(round_eval) = &self.round_eval {
            config.run.round_eval_split = match round_eval.as_str() {
                "none" => None,
                split => Some(split.parse::<Split>()?),
            };
        }
        if self.dump_candidates {
            config.run.dump_candidates = true;
        }
        Ok(config)
    }
}

/// Dispatch a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let section = SyntheticSection {
                clusters: args.clusters,
                cluster_size: args.cluster_size,
                distractors: args.distractors,
                seed: args.seed,
                stated_negatives_per_positive: args.stated_negatives_per_positive,
                ..SyntheticSection::default()
            };
            cmd_gen(&section, &args.out)?;
            Ok(())
        }
        Command::Run(args) => {
            let config = args.resolve_config()?;
            let summary = cmd_run(&config)?;
            for (strategy, s) in &summary.strategies {
                eprintln!(
                    "{}: mean AP {:.4}, mean positives {:.1}",
                    strategy.as_str(),
                    s.mean_ap,
                    s.mean_positives
                );
            }
            Ok(())
        }
        Command::Eval(args) => {
            let mut config = ExperimentConfig::default();
            config.corpus.utterances = Some(args.utterances);
            config.corpus.pairs = Some(args.pairs);
            config.corpus.mode = match args.mode.as_str() {
                "symmetric" => PairMode::Symmetric,
                "bipartite" => PairMode::Bipartite,
                other => {
                    return Err(crate::Error::InvalidConfig(format!(
                        "unknown mode '{other}'"
                    )))
                }
            };
            config.eval = EvalSection {
                near_per_utterance: args.near_per_utterance,
                random_size: args.random_size,
                seed: args.eval_seed,
            };
            let split = match args.split.as_str() {
                "all" => None,
                split => Some(split.parse::<Split>()?),
            };
            let metrics = cmd_eval(&args.model, &config, split, &args.out)?;
            eprintln!(
                "AP {:.4}, P@R20 {}",
                metrics.all_pairs.ap,
                metrics
                    .all_pairs
                    .p_at_r20
                    .map_or("n/a".to_string(), |p| format!("{p:.4}"))
            );
            Ok(())
        }
        Command::Report(args) => {
            cmd_report(&args.runs, &args.out)?;
            Ok(())
        }
    }
}

/// Keep SeedSource referenced from the CLI surface for config docs.
pub type ConfiguredSeedSource = SeedSource;
