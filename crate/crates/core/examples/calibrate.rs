//! Calibration harness for the synthetic reference experiment.
//! Prints per-strategy outcomes so preset knobs can be tuned quickly.

use pairlearn::cli::{cmd_run, ExperimentConfig};
use pairlearn::strategies::StrategyKind;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = ExperimentConfig::synthetic_preset();
    let out = tempfile::tempdir().unwrap();
    config.run.out_dir = out.path().to_path_buf();

    // knob overrides: key=value pairs
    for arg in &args {
        let (key, value) = arg.split_once('=').expect("key=value");
        match key {
            "n1" => config.schedule.n1 = value.parse().unwrap(),
            "rounds" => config.schedule.rounds = value.parse().unwrap(),
            "m" => config.run.m = value.parse().unwrap(),
            "mult" => config.train.head_lr_multiplier = value.parse().unwrap(),
            "lr" => config.train.learning_rate = value.parse().unwrap(),
            "epochs" => config.train.epochs = value.parse().unwrap(),
            "noise_vocab" => config.corpus.synthetic.noise_vocab = value.parse().unwrap(),
            "noise_per" => config.corpus.synthetic.noise_per_utterance = value.parse().unwrap(),
            "template" => config.corpus.synthetic.template_tokens = value.parse().unwrap(),
            "content_per" => config.corpus.synthetic.content_per_utterance = value.parse().unwrap(),
            "dup_every" => config.corpus.synthetic.near_duplicate_every = value.parse().unwrap(),
            "seeds" => {
                config.run.seeds = value.split('+').map(|s| s.parse().unwrap()).collect()
            }
            "dim" => config.train.dim = value.parse().unwrap(),
            "buckets" => config.train.hash_buckets = value.parse().unwrap(),
            "random_size" => config.eval.random_size = value.parse().unwrap(),
            "near_per" => config.eval.near_per_utterance = value.parse().unwrap(),
            "train_frac" => {
                let f: f64 = value.parse().unwrap();
                let rest = (1.0 - f) / 2.0;
                config.corpus.split_fractions = [f, rest, rest];
            }
            other => panic!("unknown knob {other}"),
        }
    }

    eprintln!(
        "schedule n1={} rounds={} budget={} | m={} mult={} lr={} epochs={} | noise {}x{} content {}of{} | fractions {:?}",
        config.schedule.n1,
        config.schedule.rounds,
        config.schedule.total_budget().unwrap(),
        config.run.m,
        config.train.head_lr_multiplier,
        config.train.learning_rate,
        config.train.epochs,
        config.corpus.synthetic.noise_per_utterance,
        config.corpus.synthetic.noise_vocab,
        config.corpus.synthetic.content_per_utterance,
        config.corpus.synthetic.template_tokens,
        config.corpus.split_fractions,
    );

    let start = std::time::Instant::now();
    let summary = cmd_run(&config).unwrap();
    eprintln!("elapsed: {:.1}s", start.elapsed().as_secs_f64());

    println!("\n== summary (mean over {} seeds) ==", config.run.seeds.len());
    for (strategy, s) in &summary.strategies {
        println!(
            "{:<22} mean_ap={:.4} mean_positives={:>7.1} per_seed_ap={:?}",
            strategy.as_str(),
            s.mean_ap,
            s.mean_positives,
            s.per_seed.iter().map(|o| (o.ap * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }

    // Ordering checks (criterion-7 shape).
    let ap = |k: StrategyKind| summary.strategies.get(&k).map(|s| s.mean_ap);
    let pos = |k: StrategyKind| summary.strategies.get(&k).map(|s| s.mean_positives);
    if let (Some(unc), Some(stat), Some(rand)) = (
        ap(StrategyKind::Uncertainty),
        ap(StrategyKind::StaticRetrieval),
        ap(StrategyKind::Random),
    ) {
        println!("\nAP ordering: uncertainty {unc:.4} > static {stat:.4} > random {rand:.4} : {}",
            unc > stat && stat > rand);
    }
    if let (Some(unc), Some(adapt)) =
        (ap(StrategyKind::Uncertainty), ap(StrategyKind::AdaptiveRetrieval))
    {
        println!("uncertainty >= 0.9 x adaptive: {unc:.4} vs {:.4} : {}", 0.9 * adapt, unc >= 0.9 * adapt);
    }
    if let (Some(pu), Some(pa), Some(ps)) = (
        pos(StrategyKind::Uncertainty),
        pos(StrategyKind::AdaptiveRetrieval),
        pos(StrategyKind::StaticRetrieval),
    ) {
        println!("positives: unc {pu:.1}, adapt {pa:.1}, static {ps:.1}; 5x check: {}",
            pu >= 5.0 * ps && pa >= 5.0 * ps);
    }

    // Per-round uncertainty AP for the efficiency check.
    let report_dir = out.path().join("report");
    let output = pairlearn::cli::cmd_report(&[config.run.out_dir.clone()], &report_dir).unwrap();
    for e in &output.efficiency {
        println!(
            "efficiency {} vs {}: ref_ap={:.4} ref_labels={:.0} needed={:?} ratio={:?}",
            e.adaptive_strategy.as_str(),
            e.reference_strategy.as_str(),
            e.reference_final_ap,
            e.reference_labels,
            e.labels_needed,
            e.ratio
        );
    }
}
