//! Binary logistic regression trained by full-batch gradient descent.
//!
//! The objective is the mean negative log-likelihood plus `λ/2 · ‖w‖²`
//! (bias unregularized). Idiomatic is the positive class. Steps that would
//! raise the loss are retried at half the step size, so the recorded loss is
//! non-increasing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SentenceType;
use crate::typer::{DecisionSource, SentenceTypeDecision};

const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
    pub trained_on: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    /// Recorded for provenance. Full-batch descent from zero is order-free,
    /// so it does not affect the result.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 500,
            learning_rate: 0.5,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

fn target(label: SentenceType) -> f64 {
    match label {
        SentenceType::Idiomatic => 1.0,
        SentenceType::Literal => 0.0,
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Objective value, weight gradient and bias gradient.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    data: &[(Vec<f64>, SentenceType)],
    l2_lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, label) in data {
        let y = target(*label);
        let z = dot(weights, x) + bias;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += r * xi;
        }
        grad_b += r;
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum();
    loss = loss / n + 0.5 * l2_lambda * reg;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    (loss, grad, grad_b / n)
}

fn validate(data: &[(Vec<f64>, SentenceType)]) -> Result<usize> {
    let first = data.first().ok_or(Error::DegenerateData)?;
    let d = first.0.len();
    for (x, _) in data {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
    }
    let positives = data.iter().filter(|(_, l)| *l == SentenceType::Idiomatic).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateData);
    }
    Ok(d)
}

/// Trains and returns the model along with the loss after each epoch
/// (index 0 is the loss at initialization).
pub fn train_lr_traced(
    data: &[(Vec<f64>, SentenceType)],
    params: &TrainParams,
    trained_on: &str,
) -> Result<(LrModel, Vec<f64>)> {
    let d = validate(data)?;
    if params.epochs == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::Config("epochs and learning_rate must be positive".into()));
    }
    if !(params.l2_lambda >= 0.0) {
        return Err(Error::Config("l2_lambda must be nonnegative".into()));
    }

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = params.learning_rate;
    let (mut loss, mut grad, mut grad_b) = loss_and_gradient(&w, b, data, params.l2_lambda);
    let mut history = Vec::with_capacity(params.epochs + 1);
    history.push(loss);

    for _ in 0..params.epochs {
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            let cand_b = b - step * grad_b;
            let (cand_loss, cand_grad, cand_grad_b) = loss_and_gradient(&cand_w, cand_b, data, params.l2_lambda);
            if cand_loss <= loss {
                w = cand_w;
                b = cand_b;
                loss = cand_loss;
                grad = cand_grad;
                grad_b = cand_grad_b;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }
        history.push(loss);
    }

    let model = LrModel {
        weights: w,
        bias: b,
        l2_lambda: params.l2_lambda,
        trained_on: trained_on.to_string(),
    };
    Ok((model, history))
}

pub fn train_lr(data: &[(Vec<f64>, SentenceType)], params: &TrainParams, trained_on: &str) -> Result<LrModel> {
    train_lr_traced(data, params, trained_on).map(|(m, _)| m)
}

/// `p = σ(w·x + b)` is the idiomatic probability; `p ≥ 0.5` is idiomatic.
pub fn predict_lr(model: &LrModel, feature: &[f64]) -> Result<SentenceTypeDecision> {
    if feature.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: feature.len(),
        });
    }
    let z = dot(&model.weights, feature) + model.bias;
    let p = sigmoid(z);
    let label = if z >= 0.0 {
        SentenceType::Idiomatic
    } else {
        SentenceType::Literal
    };
    Ok(SentenceTypeDecision::new(label, DecisionSource::Lr, p.max(1.0 - p)))
}

impl LrModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
