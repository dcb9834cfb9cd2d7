//! Fully connected ReLU network with softmax output, inverted dropout,
//! and early stopping on a stratified validation carve-out.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{softmax, stratified_split_indices, ModelParams, ModelSpec, TrainingMetadata, N_CLASSES};
use crate::fusion::FeatureTable;
use crate::rng::{derive_seed, rng_for};
use crate::{Error, Result};

const BATCH_SIZE: usize = 16;
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub l2: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: 2,
            hidden_units: 32,
            l2: 0.005,
            dropout: 0.2,
            learning_rate: 5e-4,
            patience: 15,
            max_epochs: 300,
        }
    }
}

impl MlpConfig {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let d = MlpConfig::default();
        Ok(MlpConfig {
            hidden_layers: spec.get_usize("hidden_layers", d.hidden_layers, 2, 4)?,
            hidden_units: spec.get_usize("hidden_units", d.hidden_units, 16, 128)?,
            l2: spec.get_f64("l2", d.l2, 0.001, 0.01)?,
            dropout: spec.get_f64("dropout", d.dropout, 0.15, 0.35)?,
            learning_rate: spec.get_f64("learning_rate", d.learning_rate, 1e-4, 1e-3)?,
            patience: spec.get_usize("patience", d.patience, 10, 30)?,
            max_epochs: spec.get_usize("max_epochs", d.max_epochs, 1, 2000)?,
        })
    }
}

/// Dense parameters; weight matrices are row-major (output x input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    fn init(layer_sizes: Vec<usize>, seed: u64) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 1..layer_sizes.len() {
            let fan_in = layer_sizes[l - 1];
            let fan_out = layer_sizes[l];
            // He initialization for ReLU layers, Xavier for the output.
            let std = if l + 1 < layer_sizes.len() {
                (2.0 / fan_in as f64).sqrt()
            } else {
                (1.0 / fan_in as f64).sqrt()
            };
            let mut rng = rng_for(seed, "mlp-init", &[l as u64]);
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * std
                    })
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        MlpParams {
            layer_sizes,
            weights,
            biases,
        }
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass collecting pre-activations and (post-dropout) activations.
    /// `dropout` supplies the keep-scaled masks at train time only.
    fn forward(
        &self,
        x: &[f64],
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut act = Vec::with_capacity(self.n_layers() + 1);
        act.push(x.to_vec());
        for l in 0..self.n_layers() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let input = &act[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(input).map(|(&w, &a)| w * a).sum::<f64>();
            }
            let is_output = l + 1 == self.n_layers();
            let mut a = if is_output {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            if !is_output {
                if let Some((p, rng)) = dropout.as_mut() {
                    let keep = 1.0 - *p;
                    for v in a.iter_mut() {
                        // Inverted dropout: scale kept units by 1/keep.
                        if rng.gen::<f64>() < *p {
                            *v = 0.0;
                        } else {
                            *v /= keep;
                        }
                    }
                }
            }
            debug_assert_eq!(a.len(), fan_out);
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (pre, _) = self.forward(x, None);
        pre.last().unwrap().clone()
    }

    fn zeros_like(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        )
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        0.5 * l2
            * self
                .weights
                .iter()
                .flat_map(|w| w.iter())
                .map(|&w| w * w)
                .sum::<f64>()
    }

    /// Mean cross-entropy + L2 over `rows`, and its analytic gradient.
    fn loss_and_grad(
        &self,
        rows: &[&[f64]],
        targets: &[usize],
        l2: f64,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (mut gw, mut gb) = self.zeros_like();
        let n = rows.len() as f64;
        let mut ce = 0.0;
        for (&row, &y) in rows.iter().zip(targets) {
            let (pre, act) = self.forward(
                row,
                dropout.as_mut().map(|(p, rng)| (*p, &mut **rng)),
            );
            let probs = softmax(pre.last().unwrap());
            ce -= probs[y].max(1e-300).ln();

            // delta starts as softmax cross-entropy gradient wrt logits.
            let mut delta: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(k, &p)| p - (k == y) as usize as f64)
                .collect();
            for l in (0..self.n_layers()).rev() {
                let fan_in = self.layer_sizes[l];
                for (o, &dv) in delta.iter().enumerate() {
                    gb[l][o] += dv;
                    let grad_row = &mut gw[l][o * fan_in..(o + 1) * fan_in];
                    for (g, &a) in grad_row.iter_mut().zip(&act[l]) {
                        *g += dv * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let fan_out = self.layer_sizes[l + 1];
                let mut prev = vec![0.0; fan_in];
                for (o, &dv) in delta.iter().enumerate().take(fan_out) {
                    let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += dv * w;
                    }
                }
                // ReLU derivative gated on the pre-activation; the dropout
                // scaling is recovered from the stored activation ratio.
                for j in 0..fan_in {
                    if pre[l - 1][j] <= 0.0 {
                        prev[j] = 0.0;
                    } else {
                        let relu = pre[l - 1][j];
                        prev[j] *= act[l][j] / relu;
                    }
                }
                delta = prev;
            }
        }
        for l in 0..self.n_layers() {
            for (g, &w) in gw[l].iter_mut().zip(&self.weights[l]) {
                *g = *g / n + l2 * w;
            }
            for g in gb[l].iter_mut() {
                *g /= n;
            }
        }
        (ce / n + self.l2_penalty(l2), gw, gb)
    }

    fn update(&mut self, gw: &[Vec<f64>], gb: &[Vec<f64>], lr: f64) {
        for l in 0..self.n_layers() {
            for (w, &g) in self.weights[l].iter_mut().zip(&gw[l]) {
                *w -= lr * g;
            }
            for (b, &g) in self.biases[l].iter_mut().zip(&gb[l]) {
                *b -= lr * g;
            }
        }
    }

    fn mean_ce(&self, rows: &[&[f64]], targets: &[usize]) -> f64 {
        let mut ce = 0.0;
        for (&row, &y) in rows.iter().zip(targets) {
            let probs = softmax(&self.logits(row));
            ce -= probs[y].max(1e-300).ln();
        }
        ce / rows.len() as f64
    }
}

pub(crate) fn train(
    spec: &ModelSpec,
    table: &FeatureTable,
) -> Result<(ModelParams, TrainingMetadata)> {
    let cfg = MlpConfig::from_spec(spec)?;
    let seed = spec.rng_seed;

    let (train_idx, val_idx) = stratified_split_indices(
        &table.labels,
        1.0 - VALIDATION_FRACTION,
        derive_seed(seed, "mlp-val", &[]),
    )?;
    let targets: Vec<usize> = table.labels.iter().map(|c| c.code()).collect();
    let val_rows: Vec<&[f64]> = val_idx.iter().map(|&i| table.rows[i].as_slice()).collect();
    let val_targets: Vec<usize> = val_idx.iter().map(|&i| targets[i]).collect();

    let mut sizes = vec![table.n_cols()];
    sizes.extend(std::iter::repeat(cfg.hidden_units).take(cfg.hidden_layers));
    sizes.push(N_CLASSES);
    let mut net = MlpParams::init(sizes, seed);

    let mut best_loss = f64::INFINITY;
    let mut best_net = net.clone();
    let mut best_epoch = 0usize;
    let mut epochs_without_improvement = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order = train_idx.clone();
        let mut shuffle_rng = rng_for(seed, "mlp-shuffle", &[epoch as u64]);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for (batch_no, batch) in order.chunks(BATCH_SIZE).enumerate() {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| table.rows[i].as_slice()).collect();
            let batch_targets: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let mut dropout_rng = rng_for(seed, "mlp-dropout", &[epoch as u64, batch_no as u64]);
            let (loss, gw, gb) = net.loss_and_grad(
                &rows,
                &batch_targets,
                cfg.l2,
                Some((cfg.dropout, &mut dropout_rng)),
            );
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "mlp batch loss became {loss} at epoch {epoch} (lr = {}, l2 = {})",
                    cfg.learning_rate, cfg.l2
                )));
            }
            net.update(&gw, &gb, cfg.learning_rate);
        }

        let val_loss = net.mean_ce(&val_rows, &val_targets);
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "mlp validation loss became {val_loss} at epoch {epoch}"
            )));
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best_net = net.clone();
            best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= cfg.patience {
                break;
            }
        }
    }

    let metadata = TrainingMetadata {
        iterations_run: epochs_run,
        early_stop_epoch: Some(best_epoch),
        final_loss: best_loss,
    };
    Ok((ModelParams::Mlp(best_net), metadata))
}

pub(crate) fn predict_proba(params: &MlpParams, rows: &[&[f64]]) -> Vec<[f64; 3]> {
    rows.iter()
        .map(|&row| {
            let p = softmax(&params.logits(row));
            [p[0], p[1], p[2]]
        })
        .collect()
}

/// Maximum relative error between analytic gradients and central finite
/// differences (step 1e-5, dropout disabled) on a randomly initialized
/// network with random inputs.
pub fn gradient_check_max_rel_error(
    hidden_layers: usize,
    hidden_units: usize,
    n_samples: usize,
    seed: u64,
) -> f64 {
    const H: f64 = 1e-5;
    const L2: f64 = 0.005;
    let n_features = 5;

    let mut sizes = vec![n_features];
    sizes.extend(std::iter::repeat(hidden_units).take(hidden_layers));
    sizes.push(N_CLASSES);
    let mut net = MlpParams::init(sizes, seed);

    let mut rng = rng_for(seed, "gradcheck-data", &[]);
    let rows_data: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| {
            (0..n_features)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z
                })
                .collect()
        })
        .collect();
    let rows: Vec<&[f64]> = rows_data.iter().map(|r| r.as_slice()).collect();
    let targets: Vec<usize> = (0..n_samples).map(|i| i % N_CLASSES).collect();

    let (_, gw, gb) = net.loss_and_grad(&rows, &targets, L2, None);

    let mut max_rel: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    };
    for l in 0..net.n_layers() {
        for i in 0..net.weights[l].len() {
            let orig = net.weights[l][i];
            net.weights[l][i] = orig + H;
            let up = net.mean_ce(&rows, &targets) + net.l2_penalty(L2);
            net.weights[l][i] = orig - H;
            let down = net.mean_ce(&rows, &targets) + net.l2_penalty(L2);
            net.weights[l][i] = orig;
            check(gw[l][i], (up - down) / (2.0 * H));
        }
        for i in 0..net.biases[l].len() {
            let orig = net.biases[l][i];
            net.biases[l][i] = orig + H;
            let up = net.mean_ce(&rows, &targets) + net.l2_penalty(L2);
            net.biases[l][i] = orig - H;
            let down = net.mean_ce(&rows, &targets) + net.l2_penalty(L2);
            net.biases[l][i] = orig;
            check(gb[l][i], (up - down) / (2.0 * H));
        }
    }
    max_rel
}
