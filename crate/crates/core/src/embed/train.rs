//! Minibatch training of the embedding table and head on binary
//! cross-entropy, differentiated through the batch-normalized cosine.

use super::{mean_var, EmbeddingModel};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One labeled pair of texts.
#[derive(Debug, Clone, Copy)]
pub struct TrainPair<'a> {
    pub a: &'a str,
    pub b: &'a str,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied to w and b only.
    pub head_lr_multiplier: f64,
    /// Adam moment decays and epsilon.
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-2,
            head_lr_multiplier: 20.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub examples: usize,
}

/// Analytic loss gradients of one batch.
pub struct BatchGrads {
    pub loss: f64,
    pub d_w: f64,
    pub d_b: f64,
    /// Gradient per touched embedding row, by bucket.
    pub d_rows: BTreeMap<u32, Vec<f64>>,
}

/// Bag-of-buckets with mean-pool weights.
struct Bag {
    // (bucket, multiplicity / token_count)
    weights: Vec<(u32, f64)>,
}

fn bag(model: &EmbeddingModel, text: &str) -> Result<Bag> {
    let tokens = model.tokenizer.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyText(super::preview(text)));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(*t).or_insert(0) += 1;
    }
    let inv = 1.0 / tokens.len() as f64;
    Ok(Bag {
        weights: counts
            .into_iter()
            .map(|(b, c)| (b, c as f64 * inv))
            .collect(),
    })
}

fn embed_bag(model: &EmbeddingModel, bag: &Bag) -> Vec<f64> {
    let mut out = vec![0.0; model.dim];
    for &(bucket, weight) in &bag.weights {
        let row = model.embedding_row(bucket);
        for (o, r) in out.iter_mut().zip(row) {
            *o += weight * r;
        }
    }
    out
}

/// Numerically stable BCE from the logit.
fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

struct Forward {
    loss: f64,
    // per-example: embeddings, norms, cosine, normalized cosine, dL/dz
    e1: Vec<Vec<f64>>,
    e2: Vec<Vec<f64>>,
    cos: Vec<f64>,
    cos_hat: Vec<f64>,
    dz: Vec<f64>,
    inv_std: f64,
    batch_mean: f64,
    batch_var: f64,
}

fn forward(model: &EmbeddingModel, bags: &[(&Bag, &Bag, bool)]) -> Result<Forward> {
    let n = bags.len();
    let mut e1 = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    for (a, b, _) in bags {
        let ea = embed_bag(model, a);
        let eb = embed_bag(model, b);
        cos.push(EmbeddingModel::cosine(&ea, &eb)?);
        e1.push(ea);
        e2.push(eb);
    }
    let (batch_mean, batch_var) = mean_var(&cos);
    let inv_std = 1.0 / (batch_var + model.bn_epsilon).sqrt();
    let mut loss = 0.0;
    let mut cos_hat = Vec::with_capacity(n);
    let mut dz = Vec::with_capacity(n);
    for (i, (_, _, label)) in bags.iter().enumerate() {
        let y = f64::from(*label);
        let ch = (cos[i] - batch_mean) * inv_std;
        let z = model.w * ch + model.b;
        loss += bce(z, y);
        // dL/dz for the mean loss
        dz.push((super::sigmoid_open(z) - y) / n as f64);
        cos_hat.push(ch);
    }
    loss /= n as f64;
    Ok(Forward {
        loss,
        e1,
        e2,
        cos,
        cos_hat,
        dz,
        inv_std,
        batch_mean,
        batch_var,
    })
}

fn backward(model: &EmbeddingModel, bags: &[(&Bag, &Bag, bool)], fwd: &Forward) -> BatchGrads {
    let n = bags.len();
    let mut d_w = 0.0;
    let mut d_b = 0.0;
    // dL/d(cos_hat)
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        d_w += fwd.dz[i] * fwd.cos_hat[i];
        d_b += fwd.dz[i];
        g.push(fwd.dz[i] * model.w);
    }
    // Batch-norm backward over the cosine feature.
    let g_mean = g.iter().sum::<f64>() / n as f64;
    let gx_mean = g
        .iter()
        .zip(&fwd.cos_hat)
        .map(|(gi, ci)| gi * ci)
        .sum::<f64>()
        / n as f64;
    let mut d_rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let d_cos = fwd.inv_std * (g[i] - g_mean - fwd.cos_hat[i] * gx_mean);
        if d_cos == 0.0 {
            continue;
        }
        let (u, v) = (&fwd.e1[i], &fwd.e2[i]);
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = fwd.cos[i];
        // dc/du = v/(|u||v|) - c u/|u|^2 ; symmetric for v.
        let dim = model.dim;
        let mut du = vec![0.0; dim];
        let mut dv = vec![0.0; dim];
        for k in 0..dim {
            du[k] = d_cos * (v[k] / (nu * nv) - c * u[k] / (nu * nu));
            dv[k] = d_cos * (u[k] / (nu * nv) - c * v[k] / (nv * nv));
        }
        // Mean-pool backward: weight per bucket.
        let (bag_a, bag_b, _) = &bags[i];
        for &(bucket, weight) in &bag_a.weights {
            let row = d_rows.entry(bucket).or_insert_with(|| vec![0.0; dim]);
            for k in 0..dim {
                row[k] += weight * du[k];
            }
        }
        for &(bucket, weight) in &bag_b.weights {
            let row = d_rows.entry(bucket).or_insert_with(|| vec![0.0; dim]);
            for k in 0..dim {
                row[k] += weight * dv[k];
            }
        }
    }
    BatchGrads {
        loss: fwd.loss,
        d_w,
        d_b,
        d_rows,
    }
}

/// Mean BCE of a batch under batch-statistics normalization. Forward only;
/// the finite-difference oracle perturbs the model and calls this.
pub fn batch_loss(model: &EmbeddingModel, batch: &[TrainPair]) -> Result<f64> {
    let bags: Vec<(Bag, Bag, bool)> = batch
        .iter()
        .map(|p| Ok((bag(model, p.a)?, bag(model, p.b)?, p.label)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&Bag, &Bag, bool)> = bags.iter().map(|(a, b, y)| (a, b, *y)).collect();
    Ok(forward(model, &refs)?.loss)
}

/// Loss and analytic gradients of a batch with respect to the embedding
/// rows, w, and b.
pub fn batch_gradients(model: &EmbeddingModel, batch: &[TrainPair]) -> Result<BatchGrads> {
    let bags: Vec<(Bag, Bag, bool)> = batch
        .iter()
        .map(|p| Ok((bag(model, p.a)?, bag(model, p.b)?, p.label)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&Bag, &Bag, bool)> = bags.iter().map(|(a, b, y)| (a, b, *y)).collect();
    let fwd = forward(model, &refs)?;
    Ok(backward(model, &refs, &fwd))
}

/// Adam state for the embedding table, updated lazily: moments advance only
/// for rows that received gradient, with bias correction at the global step.
struct LazyAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
}

impl LazyAdam {
    fn new(len: usize, cfg: &TrainConfig) -> LazyAdam {
        LazyAdam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.adam_epsilon,
            step: 0,
        }
    }

    fn correction(&self) -> (f64, f64) {
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        (c1, c2)
    }

    fn update_slice(&mut self, offset: usize, grad: &[f64], params: &mut [f64], lr: f64) {
        let (c1, c2) = self.correction();
        for (k, &g) in grad.iter().enumerate() {
            let idx = offset + k;
            self.m[idx] = self.beta1 * self.m[idx] + (1.0 - self.beta1) * g;
            self.v[idx] = self.beta2 * self.v[idx] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[idx] / c1;
            let v_hat = self.v[idx] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Scalar Adam for w and b.
struct ScalarAdam {
    m: f64,
    v: f64,
}

impl ScalarAdam {
    fn update(&mut self, cfg: &TrainConfig, step: u64, g: f64, param: &mut f64, lr: f64) {
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * g;
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * g * g;
        let m_hat = self.m / (1.0 - cfg.beta1.powi(step as i32));
        let v_hat = self.v / (1.0 - cfg.beta2.powi(step as i32));
        *param -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
}

/// Train the model in place on labeled pairs.
///
/// Each epoch shuffles the example order (seeded), walks minibatches of
/// `batch_size`, and applies Adam updates; w and b move at
/// `learning_rate * head_lr_multiplier` and w is clamped to >= 0 after every
/// step. No dropout anywhere. A trailing batch of a single example is skipped
/// because the batch normalization needs at least two samples.
pub fn train(
    model: &mut EmbeddingModel,
    data: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if cfg.epochs < 1 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    if cfg.batch_size < 2 {
        return Err(Error::InvalidConfig(
            "batch_size must be >= 2 for batch normalization".into(),
        ));
    }
    let n_pos = data.iter().filter(|p| p.label).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(Error::SingleClass);
    }

    let bags: Vec<(Bag, Bag, bool)> = data
        .iter()
        .map(|p| Ok((bag(model, p.a)?, bag(model, p.b)?, p.label)))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut adam_table = LazyAdam::new(model.table.len(), cfg);
    let mut adam_w = ScalarAdam { m: 0.0, v: 0.0 };
    let mut adam_b = ScalarAdam { m: 0.0, v: 0.0 };
    let head_lr = cfg.learning_rate * cfg.head_lr_multiplier;
    let dim = model.dim;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let refs: Vec<(&Bag, &Bag, bool)> = chunk
                .iter()
                .map(|&i| (&bags[i].0, &bags[i].1, bags[i].2))
                .collect();
            let fwd = forward(model, &refs)?;
            if !fwd.loss.is_finite() {
                return Err(Error::NanLoss { epoch, step: steps });
            }
            let grads = backward(model, &refs, &fwd);

            // Running statistics move toward the batch statistics.
            let mom = model.bn_momentum;
            model.bn_mean = (1.0 - mom) * model.bn_mean + mom * fwd.batch_mean;
            model.bn_var = (1.0 - mom) * model.bn_var + mom * fwd.batch_var;

            adam_table.step += 1;
            let step = adam_table.step;
            for (bucket, grad) in &grads.d_rows {
                let offset = *bucket as usize * dim;
                let row =
                    &mut model.table[*bucket as usize * dim..(*bucket as usize + 1) * dim];
                adam_table.update_slice(offset, grad, row, cfg.learning_rate);
            }
            adam_w.update(cfg, step, grads.d_w, &mut model.w, head_lr);
            adam_b.update(cfg, step, grads.d_b, &mut model.b, head_lr);
            model.w = model.w.max(0.0);

            epoch_loss += fwd.loss * chunk.len() as f64;
            seen += chunk.len();
            steps += 1;
        }
        epoch_losses.push(epoch_loss / seen.max(1) as f64);
    }
    Ok(TrainReport {
        epoch_losses,
        steps,
        examples: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ModelConfig;

    fn model_8() -> EmbeddingModel {
        EmbeddingModel::init(
            &ModelConfig {
                dim: 8,
                hash_buckets: 128,
                ..Default::default()
            },
            7,
        )
        .unwrap()
    }

    fn overlap_data() -> Vec<TrainPair<'static>> {
        vec![
            TrainPair { a: "red apple fruit", b: "red apple tree", label: true },
            TrainPair { a: "blue sea water", b: "blue sea waves", label: true },
            TrainPair { a: "green leaf plant", b: "green leaf stem", label: true },
            TrainPair { a: "red apple fruit", b: "blue sea water", label: false },
            TrainPair { a: "green leaf plant", b: "red apple tree", label: false },
            TrainPair { a: "blue sea waves", b: "green leaf stem", label: false },
        ]
    }

    #[test]
    fn same_seed_trains_bit_identically() {
        let cfg = TrainConfig { epochs: 3, batch_size: 2, ..Default::default() };
        let mut m1 = model_8();
        let mut m2 = model_8();
        let r1 = train(&mut m1, &overlap_data(), &cfg).unwrap();
        let r2 = train(&mut m2, &overlap_data(), &cfg).unwrap();
        assert_eq!(r1.epoch_losses, r2.epoch_losses);
        assert_eq!(m1.w.to_bits(), m2.w.to_bits());
        assert_eq!(m1.b.to_bits(), m2.b.to_bits());
        for (x, y) in m1.table().iter().zip(m2.table()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    /// Positive pairs share two tokens, negatives none: separable by overlap.
    fn separable(n_each: usize, offset: usize) -> Vec<(String, String, bool)> {
        (0..n_each)
            .flat_map(|i| {
                let i = i + offset;
                [
                    (format!("t{i} u{i} a"), format!("t{i} u{i} b"), true),
                    (format!("v{i} w{i} c"), format!("x{i} y{i} d"), false),
                ]
            })
            .collect()
    }

    fn as_pairs(d: &[(String, String, bool)]) -> Vec<TrainPair<'_>> {
        d.iter().map(|(a, b, l)| TrainPair { a, b, label: *l }).collect()
    }

    #[test]
    fn held_out_loss_decreases_over_first_three_epochs() {
        let train_data = separable(20, 0);
        let held_out = separable(10, 100);
        let mut losses = Vec::new();
        for epochs in 1..=3 {
            let cfg = TrainConfig { epochs, batch_size: 8, seed: 1, ..Default::default() };
            let mut model = model_8();
            let train_pairs: Vec<TrainPair> = as_pairs(&train_data);
            train(&mut model, &train_pairs, &cfg).unwrap();
            losses.push(batch_loss(&model, &as_pairs(&held_out)).unwrap());
        }
        assert!(losses[0] > losses[1], "{losses:?}");
        assert!(losses[1] > losses[2], "{losses:?}");
    }

    #[test]
    fn single_class_is_fatal() {
        let mut model = model_8();
        let data = vec![
            TrainPair { a: "x y", b: "x z", label: true },
            TrainPair { a: "p q", b: "p r", label: true },
        ];
        assert!(matches!(
            train(&mut model, &data, &TrainConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn w_stays_nonnegative_under_inverted_labels() {
        // High overlap labeled negative pushes w down; the clamp holds it at 0.
        let mut data = overlap_data();
        for p in &mut data {
            p.label = !p.label;
        }
        let cfg = TrainConfig { epochs: 5, batch_size: 2, ..Default::default() };
        let mut model = model_8();
        train(&mut model, &data, &cfg).unwrap();
        assert!(model.w >= 0.0);
        assert_eq!(model.w, 0.0);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let model = model_8();
        let batch = &overlap_data()[..5];
        let grads = batch_gradients(&model, batch).unwrap();
        let h = 1e-3;
        let check = |analytic: f64, plus: f64, minus: f64, what: &str| {
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            assert!(rel < 1e-4, "{what}: analytic {analytic} vs numeric {numeric}");
        };
        // Head parameters.
        for head in ["w", "b"] {
            let mut up = model.clone();
            let mut down = model.clone();
            match head {
                "w" => {
                    up.w += h;
                    down.w -= h;
                }
                _ => {
                    up.b += h;
                    down.b -= h;
                }
            }
            let analytic = if head == "w" { grads.d_w } else { grads.d_b };
            check(
                analytic,
                batch_loss(&up, batch).unwrap(),
                batch_loss(&down, batch).unwrap(),
                head,
            );
        }
        // Every touched embedding coordinate.
        for (bucket, grad) in &grads.d_rows {
            for k in 0..model.dim() {
                let mut up = model.clone();
                up.embedding_row_mut(*bucket)[k] += h;
                let mut down = model.clone();
                down.embedding_row_mut(*bucket)[k] -= h;
                check(
                    grad[k],
                    batch_loss(&up, batch).unwrap(),
                    batch_loss(&down, batch).unwrap(),
                    &format!("row {bucket}[{k}]"),
                );
            }
        }
    }
}
