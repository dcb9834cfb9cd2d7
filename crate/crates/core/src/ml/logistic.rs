//! Multinomial logistic regression with L2 penalty.

use serde::{Deserialize, Serialize};

use super::{softmax, ModelParams, ModelSpec, TrainingMetadata, N_CLASSES};
use crate::fusion::FeatureTable;
use crate::{Error, Result};

const GRAD_NORM_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 5000;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LogisticConfig {
    pub c: f64,
}

impl LogisticConfig {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(LogisticConfig {
            c: spec.get_f64("c", 1.0, 0.01, 1.0)?,
        })
    }
}

/// Weights are `[class][feature]`; the bias is unpenalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

struct Objective<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [usize],
    /// L2 coefficient lambda / n with lambda = 1 / C.
    reg: f64,
}

impl Objective<'_> {
    /// Mean cross-entropy plus (reg / 2) * ||W||^2.
    fn loss(&self, params: &LogisticParams) -> f64 {
        let n = self.rows.len() as f64;
        let mut ce = 0.0;
        for (row, &y) in self.rows.iter().zip(self.targets) {
            let probs = softmax(&logits(params, row));
            ce -= probs[y].max(1e-300).ln();
        }
        let sq: f64 = params
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .map(|&w| w * w)
            .sum();
        ce / n + 0.5 * self.reg * sq
    }

    fn gradient(&self, params: &LogisticParams) -> LogisticParams {
        let d = params.weights[0].len();
        let n = self.rows.len() as f64;
        let mut gw = vec![vec![0.0; d]; N_CLASSES];
        let mut gb = vec![0.0; N_CLASSES];
        for (row, &y) in self.rows.iter().zip(self.targets) {
            let probs = softmax(&logits(params, row));
            for k in 0..N_CLASSES {
                let err = probs[k] - (k == y) as usize as f64;
                gb[k] += err;
                for (g, &x) in gw[k].iter_mut().zip(row) {
                    *g += err * x;
                }
            }
        }
        for k in 0..N_CLASSES {
            gb[k] /= n;
            for (g, &w) in gw[k].iter_mut().zip(&params.weights[k]) {
                *g = *g / n + self.reg * w;
            }
        }
        LogisticParams {
            weights: gw,
            bias: gb,
        }
    }
}

fn logits(params: &LogisticParams, row: &[f64]) -> Vec<f64> {
    (0..N_CLASSES)
        .map(|k| {
            params.bias[k]
                + params.weights[k]
                    .iter()
                    .zip(row)
                    .map(|(&w, &x)| w * x)
                    .sum::<f64>()
        })
        .collect()
}

fn grad_norm(g: &LogisticParams) -> f64 {
    let sq: f64 = g
        .weights
        .iter()
        .flat_map(|w| w.iter())
        .chain(g.bias.iter())
        .map(|&v| v * v)
        .sum();
    sq.sqrt()
}

fn step(params: &LogisticParams, grad: &LogisticParams, s: f64) -> LogisticParams {
    LogisticParams {
        weights: params
            .weights
            .iter()
            .zip(&grad.weights)
            .map(|(wr, gr)| wr.iter().zip(gr).map(|(&w, &g)| w - s * g).collect())
            .collect(),
        bias: params
            .bias
            .iter()
            .zip(&grad.bias)
            .map(|(&b, &g)| b - s * g)
            .collect(),
    }
}

/// Full-batch gradient descent from zero weights. A backtracking line
/// search keeps the loss non-increasing at every iteration; training stops
/// at gradient norm < 1e-6 or 5000 iterations.
fn fit(config: LogisticConfig, table: &FeatureTable) -> Result<(LogisticParams, Vec<f64>)> {
    let targets: Vec<usize> = table.labels.iter().map(|c| c.code()).collect();
    let objective = Objective {
        rows: &table.rows,
        targets: &targets,
        reg: 1.0 / (config.c * table.n_rows() as f64),
    };
    let d = table.n_cols();
    let mut params = LogisticParams {
        weights: vec![vec![0.0; d]; N_CLASSES],
        bias: vec![0.0; N_CLASSES],
    };
    let mut loss = objective.loss(&params);
    let mut trace = vec![loss];
    let mut step_size: f64 = 1.0;

    for _ in 0..MAX_ITERATIONS {
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "logistic regression loss became {loss} (C = {})",
                config.c
            )));
        }
        let grad = objective.gradient(&params);
        if grad_norm(&grad) < GRAD_NORM_TOL {
            break;
        }
        // Backtrack until the loss stops increasing.
        let mut s = (step_size * 2.0).min(1e3);
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = step(&params, &grad, s);
            let candidate_loss = objective.loss(&candidate);
            if candidate_loss <= loss {
                accepted = Some((candidate, candidate_loss, s));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((candidate, candidate_loss, used)) => {
                params = candidate;
                loss = candidate_loss;
                step_size = used;
                trace.push(loss);
            }
            // No step length improves the loss: numeric convergence.
            None => break,
        }
    }
    Ok((params, trace))
}

pub(crate) fn train(
    spec: &ModelSpec,
    table: &FeatureTable,
) -> Result<(ModelParams, TrainingMetadata)> {
    let config = LogisticConfig::from_spec(spec)?;
    let (params, trace) = fit(config, table)?;
    let metadata = TrainingMetadata {
        iterations_run: trace.len() - 1,
        early_stop_epoch: None,
        final_loss: *trace.last().unwrap(),
    };
    Ok((ModelParams::Logistic(params), metadata))
}

/// Per-iteration training losses for the given spec, starting at the
/// zero-weight loss. Diagnostic companion to [`super::train`].
pub fn loss_trace(spec: &ModelSpec, table: &FeatureTable) -> Result<Vec<f64>> {
    spec.validate()?;
    table.validate()?;
    let config = LogisticConfig::from_spec(spec)?;
    Ok(fit(config, table)?.1)
}

pub(crate) fn predict_proba(params: &LogisticParams, rows: &[&[f64]]) -> Vec<[f64; 3]> {
    rows.iter()
        .map(|row| {
            let p = softmax(&logits(params, row));
            [p[0], p[1], p[2]]
        })
        .collect()
}
