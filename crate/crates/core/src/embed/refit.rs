//! Output-layer refit: freeze the embeddings and retrain (w, b) to
//! convergence on the standardized cosine feature.

use super::train::TrainPair;
use super::{mean_var, sigmoid_open, EmbeddingModel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const REFIT_ITERATIONS: usize = 10_000;
const REFIT_LR: f64 = 1.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefitReport {
    pub w: f64,
    pub b: f64,
    pub final_loss: f64,
    pub feature_mean: f64,
    pub feature_std: f64,
}

/// Two-parameter logistic regression on the frozen cosine feature.
///
/// Cosines are standardized to mean 0 / variance 1 over the provided set,
/// then (w, b) are fit by full-batch gradient descent, learning rate 1,
/// 10,000 iterations, clamping w to >= 0 each iteration. The standardization
/// constants are folded into the stored batch-norm statistics, so inference
/// scoring is consistent with the fitted head afterwards.
pub fn refit_output_layer(model: &mut EmbeddingModel, data: &[TrainPair]) -> Result<RefitReport> {
    let n_pos = data.iter().filter(|p| p.label).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(Error::SingleClass);
    }

    let mut cosines = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for pair in data {
        let ea = model.embed_utterance(pair.a)?;
        let eb = model.embed_utterance(pair.b)?;
        cosines.push(EmbeddingModel::cosine(&ea, &eb)?);
        labels.push(f64::from(pair.label));
    }

    let (mean, var) = mean_var(&cosines);
    // The fold below needs var - bn_epsilon >= 0; variance at epsilon scale
    // is degenerate anyway.
    if var <= model.bn_epsilon {
        return Err(Error::DegenerateFeature);
    }
    let std = var.sqrt();
    let features: Vec<f64> = cosines.iter().map(|c| (c - mean) / std).collect();

    let inv_n = 1.0 / data.len() as f64;
    let mut w = model.w;
    let mut b = model.b;
    let mut loss = f64::INFINITY;
    for _ in 0..REFIT_ITERATIONS {
        let mut gw = 0.0;
        let mut gb = 0.0;
        loss = 0.0;
        for (f, y) in features.iter().zip(&labels) {
            let z = w * f + b;
            let err = sigmoid_open(z) - y;
            gw += err * f;
            gb += err;
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        }
        w -= REFIT_LR * gw * inv_n;
        b -= REFIT_LR * gb * inv_n;
        w = w.max(0.0);
        loss *= inv_n;
    }

    model.w = w;
    model.b = b;
    model.bn_mean = mean;
    model.bn_var = var - model.bn_epsilon;
    Ok(RefitReport {
        w,
        b,
        final_loss: loss,
        feature_mean: mean,
        feature_std: std,
    })
}
