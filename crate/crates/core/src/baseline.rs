//! L2-regularized logistic regression on the last hour plus statics.
//!
//! Objective: mean log-loss + (λ/2)‖w‖², bias unpenalized. Full-batch Adam
//! with a decaying step does the bulk of the work; if the gradient norm is
//! still above tolerance afterwards, a few damped Newton steps finish it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::featurize::{FeatureTensor, HOURS, N_STATIC};
use crate::ingest::N_CHANNELS;
use crate::nn::adam::{adam_step, AdamConfig, AdamState};
use crate::nn::matrix::{dot, sigmoid};

pub const N_FEATURES: usize = N_CHANNELS + N_STATIC;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Row 47 of the sequence followed by the static block.
pub fn last_hour_features(tensor: &FeatureTensor) -> [f64; N_FEATURES] {
    let mut out = [0.0; N_FEATURES];
    out[..N_CHANNELS].copy_from_slice(&tensor.seq[HOURS - 1]);
    out[N_CHANNELS..].copy_from_slice(&tensor.static_features);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl LrModel {
    pub fn zeros(dim: usize, lambda: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            lambda,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrConfig {
    pub max_iter: usize,
    /// Stop once the full gradient norm falls below this.
    pub tol: f64,
    pub adam: AdamConfig,
    /// Per-iteration multiplier on the Adam step size.
    pub lr_decay: f64,
    /// Newton refinement steps allowed after the Adam phase.
    pub max_newton: usize,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            adam: AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            lr_decay: 0.99,
            max_newton: 50,
            seed: 0,
        }
    }
}

pub fn predict_lr(model: &LrModel, x: &[f64]) -> f64 {
    sigmoid(dot(&model.weights, x) + model.bias)
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check(features: &[Vec<f64>], labels: &[bool], dim: usize) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::Dimension {
            op: "logistic regression",
            detail: format!("{} rows, {} labels", features.len(), labels.len()),
        });
    }
    if let Some(i) = features.iter().position(|x| x.len() != dim) {
        return Err(Error::Dimension {
            op: "logistic regression",
            detail: format!("row {i} has {} features, expected {dim}", features[i].len()),
        });
    }
    Ok(())
}

/// Objective and its gradient `(∂w, ∂b)`.
pub fn objective_and_grad(
    model: &LrModel,
    features: &[Vec<f64>],
    labels: &[bool],
) -> Result<(f64, Vec<f64>, f64)> {
    check(features, labels, model.weights.len())?;
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = dot(&model.weights, x) + model.bias;
        let yf = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - yf * z;
        let r = sigmoid(z) - yf;
        gb += r;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    loss /= n;
    gb /= n;
    let mut penalty = 0.0;
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + model.lambda * w;
        penalty += w * w;
    }
    Ok((loss + 0.5 * model.lambda * penalty, gw, gb))
}

pub fn objective(model: &LrModel, features: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    Ok(objective_and_grad(model, features, labels)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrFit {
    pub model: LrModel,
    /// Adam iterations.
    pub iterations: usize,
    pub newton_steps: usize,
    pub grad_norm: f64,
    pub objective: f64,
}

/// Fits from zero weights.
pub fn train_lr(
    features: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    config: &LrConfig,
) -> Result<LrFit> {
    let dim = features.first().map_or(0, Vec::len);
    train_lr_from(LrModel::zeros(dim, lambda), features, labels, config)
}

/// Fits starting from `model`'s weights. Returns at once if already converged.
pub fn train_lr_from(
    mut model: LrModel,
    features: &[Vec<f64>],
    labels: &[bool],
    config: &LrConfig,
) -> Result<LrFit> {
    if !(model.lambda >= 0.0 && model.lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lambda must be finite and >= 0, got {}",
            model.lambda
        )));
    }
    if features.len() < 2 {
        return Err(Error::Input(format!(
            "logistic regression needs at least 2 samples, got {}",
            features.len()
        )));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Input(
            "logistic regression needs both classes".into(),
        ));
    }
    model.seed = config.seed;
    let mut adam = AdamState::new(&[model.weights.len(), 1], config.adam);
    let mut iterations = 0;
    loop {
        let (obj, gw, gb) = objective_and_grad(&model, features, labels)?;
        let grad_norm = norm(&gw, gb);
        if !grad_norm.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at iteration {iterations}"
            )));
        }
        if grad_norm < config.tol {
            return Ok(LrFit {
                model,
                iterations,
                newton_steps: 0,
                grad_norm,
                objective: obj,
            });
        }
        if iterations >= config.max_iter {
            break;
        }
        adam.config.lr = config.adam.lr * config.lr_decay.powi(iterations as i32);
        let grads = [
            ("weights".to_string(), gw.as_slice()),
            ("bias".to_string(), std::slice::from_ref(&gb)),
        ];
        let mut params = [
            model.weights.as_mut_slice(),
            std::slice::from_mut(&mut model.bias),
        ];
        adam_step(&mut params, &grads, &mut adam)?;
        iterations += 1;
    }
    polish(model, features, labels, config, iterations)
}

fn norm(gw: &[f64], gb: f64) -> f64 {
    (dot(gw, gw) + gb * gb).sqrt()
}

/// Damped Newton steps from the Adam iterate until the gradient norm is
/// below tolerance. A step that fails to lower the objective is halved.
fn polish(
    mut model: LrModel,
    features: &[Vec<f64>],
    labels: &[bool],
    config: &LrConfig,
    iterations: usize,
) -> Result<LrFit> {
    let d = model.weights.len();
    let n = features.len() as f64;
    let (mut obj, mut gw, mut gb) = objective_and_grad(&model, features, labels)?;
    let mut steps = 0;
    while norm(&gw, gb) >= config.tol && steps < config.max_newton {
        // Hessian over [w; b]: XᵀDX/n plus λ on the weight diagonal.
        let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut row = vec![0.0; d + 1];
        for x in features {
            let p = sigmoid(dot(&model.weights, x) + model.bias);
            let s = p * (1.0 - p) / n;
            row[..d].copy_from_slice(x);
            row[d] = 1.0;
            for i in 0..=d {
                for j in 0..=i {
                    h[(i, j)] += s * row[i] * row[j];
                }
            }
        }
        for i in 0..=d {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
            if i < d {
                h[(i, i)] += model.lambda;
            }
        }
        let g = DVector::from_iterator(d + 1, gw.iter().copied().chain([gb]));
        let Some(chol) = h.cholesky() else {
            break;
        };
        let dir = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = model.clone();
            for i in 0..d {
                trial.weights[i] -= t * dir[i];
            }
            trial.bias -= t * dir[d];
            let (t_obj, t_gw, t_gb) = objective_and_grad(&trial, features, labels)?;
            if t_obj <= obj {
                model = trial;
                (obj, gw, gb) = (t_obj, t_gw, t_gb);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        if !accepted {
            break;
        }
    }
    Ok(LrFit {
        model,
        iterations,
        newton_steps: steps,
        grad_norm: norm(&gw, gb),
        objective: obj,
    })
}

const COEF_NAMES: [&str; N_FEATURES] = [
    "gcs",
    "sbp",
    "heart_rate",
    "temp_f",
    "pao2",
    "fio2",
    "urine_output",
    "bun",
    "wbc",
    "bicarbonate",
    "sodium",
    "potassium",
    "bilirubin",
    "age",
    "cat_scheduled_surgical",
    "cat_unscheduled_surgical",
    "cat_medical",
    "aids",
    "hem_malig",
    "metastatic",
];

/// `name=value` lines: 20 weights, the bias, then lambda and seed.
pub fn encode_lr(model: &LrModel) -> Result<String> {
    if model.weights.len() != N_FEATURES {
        return Err(Error::Dimension {
            op: "encode_lr",
            detail: format!("{} weights, expected {N_FEATURES}", model.weights.len()),
        });
    }
    let mut s = String::new();
    for (name, w) in COEF_NAMES.iter().zip(&model.weights) {
        let _ = writeln!(s, "{name}={w:e}");
    }
    let _ = writeln!(s, "bias={:e}", model.bias);
    let _ = writeln!(s, "lambda={:e}", model.lambda);
    let _ = writeln!(s, "seed={}", model.seed);
    Ok(s)
}

pub fn decode_lr(text: &str) -> Result<LrModel> {
    let mut values = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("line {}: expected name=value", i + 1)))?;
        values.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |k: &str| -> Result<f64> {
        let v = values
            .get(k)
            .ok_or_else(|| Error::Checkpoint(format!("missing coefficient `{k}`")))?;
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("`{k}`: bad number `{v}`")))
    };
    let weights = COEF_NAMES
        .iter()
        .map(|k| num(k))
        .collect::<Result<Vec<_>>>()?;
    let seed = values
        .get("seed")
        .ok_or_else(|| Error::Checkpoint("missing `seed`".into()))?
        .parse()
        .map_err(|_| Error::Checkpoint("bad seed".into()))?;
    Ok(LrModel {
        weights,
        bias: num("bias")?,
        lambda: num("lambda")?,
        seed,
    })
}

pub fn save_lr(path: &Path, model: &LrModel) -> Result<()> {
    std::fs::write(path, encode_lr(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_lr(path: &Path) -> Result<LrModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    decode_lr(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests;
