//! Standardized logistic-regression probe trained by full-batch gradient
//! descent from zero.
//!
//! The objective is the mean binary cross-entropy plus `ρ/2 ‖w‖²` (bias not
//! regularized). The step is `1/L` with `L = (1/4N) Σ (‖x_i‖² + 1) + ρ`, an
//! upper bound on the Hessian's largest eigenvalue, so every step is a
//! descent step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::FeatureMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProbeError {
    #[error("training rows contain a single class")]
    SingleClass,
    #[error("model has {expected} columns, features have {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("labels ({labels}) do not match feature rows ({rows})")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("non-finite feature value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub iterations: usize,
    /// Ridge strength; `None` means `1 / N_train`.
    pub rho: Option<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feat_mu: Vec<f64>,
    /// Zero marks a constant column, which standardizes to 0.
    pub feat_sd: Vec<f64>,
    pub iterations: usize,
}

impl ProbeModel {
    fn standardize_row(&self, row: &[f64]) -> Vec<f64> {
        standardize_row(row, &self.feat_mu, &self.feat_sd)
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        let x = self.standardize_row(row);
        dot(&self.weights, &x) + self.bias
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }

    /// `true` means the second class of the pair; probability 0.5 resolves
    /// to it.
    pub fn predict(&self, row: &[f64]) -> bool {
        self.probability(row) >= 0.5
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
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
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn standardize_row(row: &[f64], mu: &[f64], sd: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(mu.iter().zip(sd))
        .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
        .collect()
}

/// Regularized loss and its gradient `(∂w, ∂b)` on already-standardized rows.
pub fn loss_and_gradient(
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    rho: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = dot(weights, x) + bias;
        let t = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + rho * w;
    }
    loss += 0.5 * rho * dot(weights, weights);
    (loss, gw, gb)
}

fn validate(f: &FeatureMatrix, labels: &[bool]) -> Result<(), ProbeError> {
    if labels.len() != f.nrows() {
        return Err(ProbeError::LengthMismatch {
            labels: labels.len(),
            rows: f.nrows(),
        });
    }
    if f.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(ProbeError::SingleClass);
    }
    Ok(())
}

/// Fits on rows that are already standardized; identity statistics are
/// stored in the model.
pub fn fit_standardized(
    f: &FeatureMatrix,
    labels: &[bool],
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, Vec<f64>), ProbeError> {
    validate(f, labels)?;
    let d = f.ncols();
    let rows: Vec<Vec<f64>> = f.rows().map(<[f64]>::to_vec).collect();
    let (w, b, trace) = descend(&rows, labels, cfg);
    Ok((
        ProbeModel {
            weights: w,
            bias: b,
            feat_mu: vec![0.0; d],
            feat_sd: vec![1.0; d],
            iterations: cfg.iterations,
        },
        trace,
    ))
}

fn descend(rows: &[Vec<f64>], labels: &[bool], cfg: &ProbeConfig) -> (Vec<f64>, f64, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows.first().map_or(0, Vec::len);
    let rho = cfg.rho.unwrap_or(1.0 / n);
    let lipschitz = rows.iter().map(|x| dot(x, x) + 1.0).sum::<f64>() / (4.0 * n) + rho;
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        let (loss, gw, gb) = loss_and_gradient(rows, labels, &w, b, rho);
        trace.push(loss);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    trace.push(loss_and_gradient(rows, labels, &w, b, rho).0);
    (w, b, trace)
}

/// Fits the probe and also returns the loss before each step and after the
/// last one.
pub fn fit_probe_traced(
    f: &FeatureMatrix,
    labels: &[bool],
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, Vec<f64>), ProbeError> {
    validate(f, labels)?;
    let d = f.ncols();
    let n = f.nrows() as f64;
    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for c in 0..d {
        let m = f.column(c).sum::<f64>() / n;
        let v = f.column(c).map(|x| (x - m).powi(2)).sum::<f64>() / n;
        mu[c] = m;
        sd[c] = if v.sqrt() > 1e-12 { v.sqrt() } else { 0.0 };
    }
    let rows: Vec<Vec<f64>> = f.rows().map(|r| standardize_row(r, &mu, &sd)).collect();
    let (w, b, trace) = descend(&rows, labels, cfg);
    Ok((
        ProbeModel {
            weights: w,
            bias: b,
            feat_mu: mu,
            feat_sd: sd,
            iterations: cfg.iterations,
        },
        trace,
    ))
}

pub fn fit_probe(f: &FeatureMatrix, labels: &[bool], cfg: &ProbeConfig) -> Result<ProbeModel, ProbeError> {
    fit_probe_traced(f, labels, cfg).map(|(m, _)| m)
}

/// Fraction of rows predicted correctly.
pub fn task_accuracy(model: &ProbeModel, f: &FeatureMatrix, labels: &[bool]) -> Result<f64, ProbeError> {
    if f.ncols() != model.weights.len() {
        return Err(ProbeError::ColumnMismatch {
            expected: model.weights.len(),
            got: f.ncols(),
        });
    }
    if labels.len() != f.nrows() {
        return Err(ProbeError::LengthMismatch {
            labels: labels.len(),
            rows: f.nrows(),
        });
    }
    if f.nrows() == 0 {
        return Err(ProbeError::EmptyTestSet);
    }
    let correct = f.rows().zip(labels).filter(|(r, &y)| model.predict(r) == y).count();
    Ok(correct as f64 / f.nrows() as f64)
}
