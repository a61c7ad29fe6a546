//! The trainable dual-encoder scoring model.
//!
//! Utterances embed as the mean of hashed token-embedding rows; a pair is
//! scored by the cosine similarity of the two embeddings, passed through a
//! batch-normalized two-parameter logistic head:
//!
//!   p(y=1 | a, b) = sigmoid(w * norm(cos(e(a), e(b))) + b),   w >= 0
//!
//! During training the cosine is normalized by batch statistics; at inference
//! it is normalized by the stored running statistics.

mod checkpoint;
mod refit;
mod train;

pub use refit::{refit_output_layer, RefitReport};
pub use train::{batch_gradients, batch_loss, train, BatchGrads, TrainConfig, TrainPair, TrainReport};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Whitespace tokenizer with feature hashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub lowercase: bool,
    pub hash_buckets: u32,
    pub hash_seed: u64,
    /// Tokens beyond this cap are dropped.
    pub max_tokens: usize,
}

impl Tokenizer {
    /// Seeded FNV-1a; stable across platforms and versions.
    pub fn bucket(&self, token: &str) -> u32 {
        let mut h: u64 = 0xcbf29ce484222325 ^ self.hash_seed;
        for byte in token.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        (h % self.hash_buckets as u64) as u32
    }

    /// Token-bucket multiset of a text, in token order, capped at
    /// `max_tokens`.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for token in text.split_whitespace().take(self.max_tokens) {
            if self.lowercase {
                out.push(self.bucket(&token.to_lowercase()));
            } else {
                out.push(self.bucket(token));
            }
        }
        out
    }
}

/// Hyperparameters fixed at model construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub hash_buckets: u32,
    pub lowercase: bool,
    pub hash_seed: u64,
    pub max_tokens: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            dim: 64,
            hash_buckets: 1 << 16,
            lowercase: true,
            hash_seed: 0,
            max_tokens: 256,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }
}

/// Cosine normalization source for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// Normalize by the statistics of the scored batch (training forward).
    BatchStats,
    /// Normalize by the stored running statistics.
    RunningStats,
}

/// Token embedding table plus the cosine-logistic head.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    tokenizer: Tokenizer,
    dim: usize,
    table: Vec<f64>, // hash_buckets x dim, row-major
    pub w: f64,
    pub b: f64,
    pub bn_mean: f64,
    pub bn_var: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

/// Box-Muller standard normals; two per uniform pair.
fn fill_gaussian(rng: &mut impl rand::Rng, out: &mut [f64], scale: f64) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * theta.cos() * scale;
        i += 1;
        if i < out.len() {
            out[i] = r * theta.sin() * scale;
            i += 1;
        }
    }
}

impl EmbeddingModel {
    /// Fresh model with a seeded Gaussian table. The untrained model already
    /// ranks pairs by token overlap, which is what seeds retrieval; w = 1 and
    /// b = 0 make high cosine mean positive from the start.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<EmbeddingModel> {
        if config.dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "embedding dim must be >= 2, got {}",
                config.dim
            )));
        }
        if config.hash_buckets == 0 {
            return Err(Error::InvalidConfig("hash_buckets must be positive".into()));
        }
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut table = vec![0.0; config.hash_buckets as usize * config.dim];
        // Row norms near 1 so raw cosines span a useful range.
        fill_gaussian(&mut rng, &mut table, 1.0 / (config.dim as f64).sqrt());
        Ok(EmbeddingModel {
            tokenizer: Tokenizer {
                lowercase: config.lowercase,
                hash_buckets: config.hash_buckets,
                hash_seed: config.hash_seed,
                max_tokens: config.max_tokens,
            },
            dim: config.dim,
            table,
            w: 1.0,
            b: 0.0,
            bn_mean: 0.0,
            bn_var: 1.0,
            bn_momentum: config.bn_momentum,
            bn_epsilon: config.bn_epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_buckets(&self) -> u32 {
        self.tokenizer.hash_buckets
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn embedding_row(&self, bucket: u32) -> &[f64] {
        let d = self.dim;
        &self.table[bucket as usize * d..(bucket as usize + 1) * d]
    }

    pub fn embedding_row_mut(&mut self, bucket: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.table[bucket as usize * d..(bucket as usize + 1) * d]
    }

    pub(crate) fn table(&self) -> &[f64] {
        &self.table
    }

    pub(crate) fn from_parts(
        tokenizer: Tokenizer,
        dim: usize,
        table: Vec<f64>,
        head: [f64; 6],
    ) -> EmbeddingModel {
        EmbeddingModel {
            tokenizer,
            dim,
            table,
            w: head[0],
            b: head[1],
            bn_mean: head[2],
            bn_var: head[3],
            bn_momentum: head[4],
            bn_epsilon: head[5],
        }
    }

    /// Mean of the token rows. Token order never matters.
    pub fn embed_utterance(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = self.tokenizer.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText(preview(text)));
        }
        let mut out = vec![0.0; self.dim];
        for &bucket in &tokens {
            let row = self.embedding_row(bucket);
            for (o, r) in out.iter_mut().zip(row) {
                *o += r;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        for o in &mut out {
            *o *= inv;
        }
        Ok(out)
    }

    /// Raw cosine similarity of two embeddings.
    pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na < DEGENERATE_NORM_SQ || nb < DEGENERATE_NORM_SQ {
            return Err(Error::DegenerateEmbedding("zero-norm vector in cosine".into()));
        }
        Ok(dot / (na.sqrt() * nb.sqrt()))
    }

    /// Probability from a raw cosine under the running statistics.
    pub fn prob_from_cosine(&self, cosine: f64) -> f64 {
        let normed = (cosine - self.bn_mean) / (self.bn_var + self.bn_epsilon).sqrt();
        sigmoid_open(self.w * normed + self.b)
    }

    /// p(y=1) for a pair of embeddings, inference-mode normalization.
    pub fn predict_prob(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        Ok(self.prob_from_cosine(Self::cosine(a, b)?))
    }

    /// Score a whole batch of raw cosines, normalizing per `mode`.
    pub fn predict_prob_batch(&self, cosines: &[f64], mode: InferenceMode) -> Vec<f64> {
        match mode {
            InferenceMode::RunningStats => {
                cosines.iter().map(|&c| self.prob_from_cosine(c)).collect()
            }
            InferenceMode::BatchStats => {
                let (mean, var) = mean_var(cosines);
                let s = 1.0 / (var + self.bn_epsilon).sqrt();
                cosines
                    .iter()
                    .map(|&c| sigmoid_open(self.w * ((c - mean) * s) + self.b))
                    .collect()
            }
        }
    }

    /// Convenience: probability for a pair of texts at inference.
    pub fn score_texts(&self, a: &str, b: &str) -> Result<f64> {
        let ea = self.embed_utterance(a)?;
        let eb = self.embed_utterance(b)?;
        self.predict_prob(&ea, &eb)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<EmbeddingModel> {
        checkpoint::load(path)
    }
}

const DEGENERATE_NORM_SQ: f64 = 1e-280;

fn preview(text: &str) -> String {
    let t: String = text.chars().take(40).collect();
    format!("text '{t}'")
}

/// Population mean and (biased) variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Sigmoid clamped so the result stays strictly inside (0, 1) in f64.
pub(crate) fn sigmoid_open(z: f64) -> f64 {
    let z = z.clamp(-36.0, 36.0);
    1.0 / (1.0 + (-z).exp())
}
