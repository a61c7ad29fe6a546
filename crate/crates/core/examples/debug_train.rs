//! Inspect what one round of training does to the embedding geometry.

use pairlearn::corpus::{gen_synthetic, PairKey, PairSpace, SyntheticConfig, VocabConfig};
use pairlearn::embed::*;
use pairlearn::index::{build_candidates, top_scoring, EmbeddingIndex};
use std::collections::HashSet;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut mult = 20.0;
    let mut lr = 1e-2;
    let mut epochs = 2;
    let mut content_per = 3;
    let mut template = 8;
    let mut noise_per = 5;
    let mut noise_vocab = 200;
    let mut dup_every = 3;
    for arg in &args {
        let (k, v) = arg.split_once('=').unwrap();
        match k {
            "mult" => mult = v.parse().unwrap(),
            "lr" => lr = v.parse().unwrap(),
            "epochs" => epochs = v.parse().unwrap(),
            "content_per" => content_per = v.parse().unwrap(),
            "template" => template = v.parse().unwrap(),
            "noise_per" => noise_per = v.parse().unwrap(),
            "noise_vocab" => noise_vocab = v.parse().unwrap(),
            "dup_every" => dup_every = v.parse().unwrap(),
            "dim" => {},
            _ => panic!("unknown {k}"),
        }
    }
    let cfg = SyntheticConfig {
        n_clusters: 50,
        cluster_size: 4,
        n_distractors: 1800,
        vocab: VocabConfig {
            content_vocab: 40_000,
            template_tokens: template,
            content_per_utterance: content_per,
            noise_vocab,
            noise_per_utterance: noise_per,
            near_duplicate_every: dup_every,
        },
        seed: 13,
    };
    let (corpus, oracle) = gen_synthetic(&cfg).unwrap();
    // pretend first 1200 utterances are "train" (clusters are ids 0..200)
    let ids: Vec<u32> = (0..1200).collect();
    let space = PairSpace::symmetric(ids.clone());
    let entries: Vec<(u32, &str)> = ids.iter().map(|&i| (i, corpus.left_text(i))).collect();

    let mut dim = 64; for arg in &args { if let Some(v) = arg.strip_prefix("dim=") { dim = v.parse().unwrap(); } }
    let model_cfg = ModelConfig { dim, hash_buckets: 1 << 14, ..Default::default() };
    let model = EmbeddingModel::init(&model_cfg, 99).unwrap();

    // static seed
    let index = EmbeddingIndex::build(&model, &entries).unwrap();
    let cands = build_candidates(&model, &index, &entries, pairlearn::corpus::PairMode::Symmetric, 64, &HashSet::new(), 0).unwrap();
    let seed_keys = top_scoring(&cands, 64);
    let n_pos_seed = seed_keys.iter().filter(|k| oracle.label(k)).count();
    println!("seed: {n_pos_seed}/64 positive");

    let data: Vec<TrainPair> = seed_keys
        .iter()
        .map(|k| TrainPair {
            a: corpus.left_text(k.a),
            b: corpus.left_text(k.b),
            label: oracle.label(k),
        })
        .collect();

    let mut trained = model.clone();
    let tc = TrainConfig { epochs, batch_size: 16, learning_rate: lr, head_lr_multiplier: mult, ..Default::default() };
    let report = train(&mut trained, &data, &tc).unwrap();
    println!("epoch losses {:?}, w={:.4} b={:.4} bn=({:.4},{:.4})", report.epoch_losses, trained.w, trained.b, trained.bn_mean, trained.bn_var);
    let rr = refit_output_layer(&mut trained, &data).unwrap();
    println!("refit w={:.4} b={:.4} loss={:.4} feat=({:.4},{:.4})", rr.w, rr.b, rr.final_loss, rr.feature_mean, rr.feature_std);

    // token norms: noise vs content (trained rows)
    let tok = trained.tokenizer().clone();
    let norm_of = |m: &EmbeddingModel, t: &str| {
        let row = m.embedding_row(tok.bucket(t));
        row.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let noise_norms: Vec<f64> = (0..noise_vocab).map(|i| norm_of(&trained, &format!("z{i}"))).collect();
    let noise_before: Vec<f64> = (0..noise_vocab).map(|i| norm_of(&model, &format!("z{i}"))).collect();
    println!(
        "noise norms: before mean {:.3}, after mean {:.3}, min {:.3}",
        noise_before.iter().sum::<f64>() / noise_vocab as f64,
        noise_norms.iter().sum::<f64>() / noise_vocab as f64,
        noise_norms.iter().cloned().fold(f64::INFINITY, f64::min),
    );

    // cosine separation on 200 random positives/negatives of the train space
    let positives = oracle.positives_in(&space);
    let cos_of = |m: &EmbeddingModel, k: &PairKey| {
        let a = m.embed_utterance(corpus.left_text(k.a)).unwrap();
        let b = m.embed_utterance(corpus.left_text(k.b)).unwrap();
        EmbeddingModel::cosine(&a, &b).unwrap()
    };
    let mean_pos_before: f64 = positives.iter().map(|k| cos_of(&model, k)).sum::<f64>() / positives.len() as f64;
    let mean_pos_after: f64 = positives.iter().map(|k| cos_of(&trained, k)).sum::<f64>() / positives.len() as f64;
    let negs: Vec<PairKey> = (0..space.size()).step_by(997).map(|i| space.pair_at(i)).filter(|k| !oracle.label(k)).take(500).collect();
    let mean_neg_before: f64 = negs.iter().map(|k| cos_of(&model, k)).sum::<f64>() / negs.len() as f64;
    let mean_neg_after: f64 = negs.iter().map(|k| cos_of(&trained, k)).sum::<f64>() / negs.len() as f64;
    println!("train-split positives cosine: {mean_pos_before:.4} -> {mean_pos_after:.4}");
    println!("train-split negatives cosine: {mean_neg_before:.4} -> {mean_neg_after:.4}");

    // retrieval after training
    let index2 = EmbeddingIndex::build(&trained, &entries).unwrap();
    let seed_set: HashSet<PairKey> = seed_keys.iter().copied().collect();
    let cands2 = build_candidates(&trained, &index2, &entries, pairlearn::corpus::PairMode::Symmetric, 64, &seed_set, 1).unwrap();
    let next = top_scoring(&cands2, 96);
    let n_pos_next = next.iter().filter(|k| oracle.label(k)).count();
    println!("round-2 adaptive batch: {n_pos_next}/96 positive (pool had {} candidates)", cands2.len());
    let probs: Vec<f64> = cands2.candidates.iter().map(|c| c.prob).collect();
    let pmax = probs.iter().cloned().fold(0.0f64, f64::max);
    let pmin = probs.iter().cloned().fold(1.0f64, f64::min);
    println!("candidate prob range: [{pmin:.4}, {pmax:.4}]");
}
