//! Gradient boosting: one-vs-all regression trees fit to softmax residuals.
//!
//! The optional `regularized` flag adds an L2 term on leaf values and
//! per-tree column subsampling, covering the shrunken-leaf family of
//! boosters with the same core implementation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, ModelParams, ModelSpec, TrainingMetadata, N_CLASSES};
use crate::fusion::FeatureTable;
use crate::rng::rng_for;
use crate::{Error, Result};

const LEAF_L2: f64 = 1.0;
const MIN_SAMPLES_SPLIT: usize = 2;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoostConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub regularized: bool,
    pub colsample: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_trees: 80,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 0.8,
            regularized: false,
            colsample: 0.8,
        }
    }
}

impl BoostConfig {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let d = BoostConfig::default();
        Ok(BoostConfig {
            n_trees: spec.get_usize("n_trees", d.n_trees, 30, 200)?,
            learning_rate: spec.get_f64("learning_rate", d.learning_rate, 0.01, 0.2)?,
            max_depth: spec.get_usize("max_depth", d.max_depth, 3, 8)?,
            subsample: spec.get_f64("subsample", d.subsample, 0.6, 1.0)?,
            regularized: spec.get_bool("regularized", d.regularized)?,
            colsample: spec.get_f64("colsample", d.colsample, 0.5, 0.8)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                RegNode::Leaf { value } => return value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// `trees[round][class]` are applied additively on top of `init_logits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub init_logits: Vec<f64>,
    pub learning_rate: f64,
    pub trees: Vec<Vec<RegTree>>,
}

struct SseSplit {
    feature: usize,
    threshold: f64,
    sse: f64,
}

/// Split minimizing the summed squared error of child means.
fn best_sse_split(
    rows: &[Vec<f64>],
    residuals: &[f64],
    indices: &[usize],
    features: &[usize],
) -> Option<SseSplit> {
    let n = indices.len() as f64;
    let total: f64 = indices.iter().map(|&i| residuals[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let parent_sse = total_sq - total * total / n;

    let mut best: Option<SseSplit> = None;
    let mut ordered: Vec<(f64, f64)> = Vec::with_capacity(indices.len());
    for &feature in features {
        ordered.clear();
        ordered.extend(indices.iter().map(|&i| (rows[i][feature], residuals[i])));
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for w in 0..ordered.len() - 1 {
            left_sum += ordered[w].1;
            left_sq += ordered[w].1 * ordered[w].1;
            if ordered[w].0 == ordered[w + 1].0 {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse =
                (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            if best.as_ref().map_or(true, |b| sse < b.sse) {
                best = Some(SseSplit {
                    feature,
                    threshold: (ordered[w].0 + ordered[w + 1].0) / 2.0,
                    sse,
                });
            }
        }
    }
    best.filter(|b| b.sse < parent_sse - 1e-12)
}

fn leaf_value(residuals: &[f64], indices: &[usize], l2: f64) -> f64 {
    let sum: f64 = indices.iter().map(|&i| residuals[i]).sum();
    sum / (indices.len() as f64 + l2)
}

#[allow(clippy::too_many_arguments)]
fn grow_reg_node(
    nodes: &mut Vec<RegNode>,
    rows: &[Vec<f64>],
    residuals: &[f64],
    indices: &[usize],
    depth: usize,
    max_depth: usize,
    features: &[usize],
    l2: f64,
) -> usize {
    let choice = if depth >= max_depth || indices.len() < MIN_SAMPLES_SPLIT {
        None
    } else {
        best_sse_split(rows, residuals, indices, features)
    };
    match choice {
        None => {
            nodes.push(RegNode::Leaf {
                value: leaf_value(residuals, indices, l2),
            });
            nodes.len() - 1
        }
        Some(split) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| rows[i][split.feature] <= split.threshold);
            let at = nodes.len();
            nodes.push(RegNode::Leaf { value: 0.0 });
            let left = grow_reg_node(
                nodes, rows, residuals, &left_idx, depth + 1, max_depth, features, l2,
            );
            let right = grow_reg_node(
                nodes, rows, residuals, &right_idx, depth + 1, max_depth, features, l2,
            );
            nodes[at] = RegNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            at
        }
    }
}

fn sample_without_replacement(n: usize, take: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..take {
        let j = rng.gen_range(i..n);
        all.swap(i, j);
    }
    all.truncate(take);
    all.sort_unstable();
    all
}

fn subsample_indices(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let take = ((n as f64 * fraction).floor() as usize).clamp(1, n);
    sample_without_replacement(n, take, rng)
}

pub(crate) fn train(
    spec: &ModelSpec,
    table: &FeatureTable,
) -> Result<(ModelParams, TrainingMetadata)> {
    let cfg = BoostConfig::from_spec(spec)?;
    let seed = spec.rng_seed;
    let n = table.n_rows();
    let d = table.n_cols();
    let targets: Vec<usize> = table.labels.iter().map(|c| c.code()).collect();

    // Laplace-smoothed log priors as the starting logits.
    let mut counts = [0usize; 3];
    for &t in &targets {
        counts[t] += 1;
    }
    let init_logits: Vec<f64> = counts
        .iter()
        .map(|&c| ((c + 1) as f64 / (n + N_CLASSES) as f64).ln())
        .collect();

    let mut logits: Vec<[f64; 3]> = vec![[init_logits[0], init_logits[1], init_logits[2]]; n];
    let mut rounds: Vec<Vec<RegTree>> = Vec::with_capacity(cfg.n_trees);
    let leaf_l2 = if cfg.regularized { LEAF_L2 } else { 0.0 };
    let mut final_loss = f64::NAN;

    for round in 0..cfg.n_trees {
        let probs: Vec<[f64; 3]> = logits
            .iter()
            .map(|z| {
                let p = softmax(z);
                [p[0], p[1], p[2]]
            })
            .collect();
        let ce = -probs
            .iter()
            .zip(&targets)
            .map(|(p, &y)| p[y].max(1e-300).ln())
            .sum::<f64>()
            / n as f64;
        if !ce.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "boosting loss became {ce} at round {round} (lr = {})",
                cfg.learning_rate
            )));
        }
        final_loss = ce;

        let mut row_rng = rng_for(seed, "boost-rows", &[round as u64]);
        let sample = subsample_indices(n, cfg.subsample, &mut row_rng);

        let mut round_trees = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            let residuals: Vec<f64> = (0..n)
                .map(|i| (targets[i] == k) as usize as f64 - probs[i][k])
                .collect();
            let features: Vec<usize> = if cfg.regularized {
                let mut col_rng = rng_for(seed, "boost-cols", &[round as u64, k as u64]);
                let take = ((d as f64 * cfg.colsample).ceil() as usize).clamp(1, d);
                sample_without_replacement(d, take, &mut col_rng)
            } else {
                (0..d).collect()
            };
            let mut nodes = Vec::new();
            grow_reg_node(
                &mut nodes,
                &table.rows,
                &residuals,
                &sample,
                0,
                cfg.max_depth,
                &features,
                leaf_l2,
            );
            let tree = RegTree { nodes };
            for (i, row) in table.rows.iter().enumerate() {
                logits[i][k] += cfg.learning_rate * tree.predict(row);
            }
            round_trees.push(tree);
        }
        rounds.push(round_trees);
    }

    let metadata = TrainingMetadata {
        iterations_run: cfg.n_trees,
        early_stop_epoch: None,
        final_loss,
    };
    Ok((
        ModelParams::Boosting(BoostParams {
            init_logits,
            learning_rate: cfg.learning_rate,
            trees: rounds,
        }),
        metadata,
    ))
}

pub(crate) fn predict_proba(params: &BoostParams, rows: &[&[f64]]) -> Vec<[f64; 3]> {
    rows.iter()
        .map(|row| {
            let mut logits = [
                params.init_logits[0],
                params.init_logits[1],
                params.init_logits[2],
            ];
            for round in &params.trees {
                for (k, tree) in round.iter().enumerate() {
                    logits[k] += params.learning_rate * tree.predict(row);
                }
            }
            let p = softmax(&logits);
            [p[0], p[1], p[2]]
        })
        .collect()
}
