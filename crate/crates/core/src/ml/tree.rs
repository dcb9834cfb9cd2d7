//! CART classification trees and the bootstrap-aggregated random forest.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelParams, ModelSpec, TrainingMetadata, N_CLASSES};
use crate::fusion::FeatureTable;
use crate::rng::rng_for;
use crate::{parallel, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 10,
            min_samples_split: 2,
        }
    }
}

impl ForestConfig {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let d = ForestConfig::default();
        Ok(ForestConfig {
            n_trees: spec.get_usize("n_trees", d.n_trees, 30, 200)?,
            max_depth: spec.get_usize("max_depth", d.max_depth, 3, 15)?,
            min_samples_split: spec.get_usize("min_samples_split", d.min_samples_split, 2, 10)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum ClassNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// Nodes in an arena; the root is index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub nodes: Vec<ClassNode>,
}

impl ClassTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                ClassNode::Leaf { class } => return class,
                ClassNode::Split {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<ClassTree>,
}

fn class_counts(targets: &[usize], indices: &[usize]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for &i in indices {
        counts[targets[i]] += 1;
    }
    counts
}

/// Majority class; ties resolve to the lowest class code.
fn majority(counts: &[usize; 3]) -> usize {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    best
}

fn gini(counts: &[usize; 3], n: f64) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Distinct features drawn without replacement by partial Fisher-Yates.
fn sample_features(rng: &mut ChaCha8Rng, n_features: usize, take: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n_features).collect();
    let take = take.min(n_features);
    for i in 0..take {
        let j = rng.gen_range(i..n_features);
        all.swap(i, j);
    }
    all.truncate(take);
    all
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    weighted_impurity: f64,
}

/// Best Gini split over `features`; None when no split separates the node.
fn best_gini_split(
    rows: &[Vec<f64>],
    targets: &[usize],
    indices: &[usize],
    features: &[usize],
) -> Option<SplitChoice> {
    let n = indices.len() as f64;
    let parent_counts = class_counts(targets, indices);
    let mut best: Option<SplitChoice> = None;
    let mut ordered: Vec<(f64, usize)> = Vec::with_capacity(indices.len());
    for &feature in features {
        ordered.clear();
        ordered.extend(indices.iter().map(|&i| (rows[i][feature], targets[i])));
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = [0usize; 3];
        let mut right = parent_counts;
        for w in 0..ordered.len() - 1 {
            left[ordered[w].1] += 1;
            right[ordered[w].1] -= 1;
            if ordered[w].0 == ordered[w + 1].0 {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = n - nl;
            let weighted = (nl * gini(&left, nl) + nr * gini(&right, nr)) / n;
            if best
                .as_ref()
                .map_or(true, |b| weighted < b.weighted_impurity)
            {
                best = Some(SplitChoice {
                    feature,
                    threshold: (ordered[w].0 + ordered[w + 1].0) / 2.0,
                    weighted_impurity: weighted,
                });
            }
        }
    }
    // Require an actual impurity improvement.
    best.filter(|b| b.weighted_impurity < gini(&parent_counts, n))
}

/// Grow one CART tree. `feature_subset` is the per-split candidate count
/// (the forest passes round(sqrt(d)); pass `n_features` for plain CART).
pub(crate) fn grow_class_tree(
    rows: &[Vec<f64>],
    targets: &[usize],
    indices: &[usize],
    max_depth: usize,
    min_samples_split: usize,
    feature_subset: usize,
    rng: &mut ChaCha8Rng,
) -> ClassTree {
    let n_features = rows[0].len();
    let mut nodes = Vec::new();
    grow_node(
        &mut nodes,
        rows,
        targets,
        indices,
        0,
        max_depth,
        min_samples_split,
        feature_subset.min(n_features),
        rng,
    );
    ClassTree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    nodes: &mut Vec<ClassNode>,
    rows: &[Vec<f64>],
    targets: &[usize],
    indices: &[usize],
    depth: usize,
    max_depth: usize,
    min_samples_split: usize,
    feature_subset: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let counts = class_counts(targets, indices);
    let n_present = counts.iter().filter(|&&c| c > 0).count();
    let make_leaf = depth >= max_depth || indices.len() < min_samples_split || n_present <= 1;

    let choice = if make_leaf {
        None
    } else {
        let n_features = rows[0].len();
        let features = sample_features(rng, n_features, feature_subset);
        best_gini_split(rows, targets, indices, &features)
    };

    match choice {
        None => {
            nodes.push(ClassNode::Leaf {
                class: majority(&counts),
            });
            nodes.len() - 1
        }
        Some(split) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| rows[i][split.feature] <= split.threshold);
            let at = nodes.len();
            nodes.push(ClassNode::Leaf { class: 0 });
            let left = grow_node(
                nodes,
                rows,
                targets,
                &left_idx,
                depth + 1,
                max_depth,
                min_samples_split,
                feature_subset,
                rng,
            );
            let right = grow_node(
                nodes,
                rows,
                targets,
                &right_idx,
                depth + 1,
                max_depth,
                min_samples_split,
                feature_subset,
                rng,
            );
            nodes[at] = ClassNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            at
        }
    }
}

pub(crate) fn train_forest(
    spec: &ModelSpec,
    table: &FeatureTable,
) -> Result<(ModelParams, TrainingMetadata)> {
    let cfg = ForestConfig::from_spec(spec)?;
    let targets: Vec<usize> = table.labels.iter().map(|c| c.code()).collect();
    let n = table.n_rows();
    let feature_subset = (table.n_cols() as f64).sqrt().floor().max(1.0) as usize;

    let tree_ids: Vec<usize> = (0..cfg.n_trees).collect();
    let trees = parallel::map_slice(&tree_ids, |&t| {
        let mut rng = rng_for(spec.rng_seed, "forest", &[t as u64]);
        let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        grow_class_tree(
            &table.rows,
            &targets,
            &bootstrap,
            cfg.max_depth,
            cfg.min_samples_split,
            feature_subset,
            &mut rng,
        )
    });

    let metadata = TrainingMetadata {
        iterations_run: cfg.n_trees,
        early_stop_epoch: None,
        final_loss: 0.0,
    };
    Ok((ModelParams::Forest(ForestParams { trees }), metadata))
}

/// Vote fractions over the ensemble.
pub(crate) fn predict_proba(params: &ForestParams, rows: &[&[f64]]) -> Vec<[f64; 3]> {
    let n_trees = params.trees.len() as f64;
    rows.iter()
        .map(|row| {
            let mut votes = [0usize; 3];
            for tree in &params.trees {
                votes[tree.predict(row)] += 1;
            }
            [
                votes[0] as f64 / n_trees,
                votes[1] as f64 / n_trees,
                votes[2] as f64 / n_trees,
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::test_support::blobs;
    use crate::ml::{predict, predict_proba as model_proba, train as train_model, ModelKind};

    #[test]
    fn stump_matches_exhaustive_split_search() {
        // Two noisy features plus one feature with a clean threshold.
        let mut rng = rng_for(4, "stump", &[]);
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for i in 0..60 {
            let class = (i % 2) as usize;
            rows.push(vec![
                rng.gen_range(0.0..1.0),
                class as f64 * 2.0 + rng.gen_range(0.0..0.5),
                rng.gen_range(0.0..1.0),
            ]);
            targets.push(class);
        }
        let indices: Vec<usize> = (0..rows.len()).collect();

        let mut grow_rng = rng_for(4, "stump-grow", &[]);
        let tree = grow_class_tree(&rows, &targets, &indices, 1, 2, 3, &mut grow_rng);

        // Exhaustive oracle over every feature and midpoint.
        let all: Vec<usize> = (0..3).collect();
        let oracle = best_gini_split(&rows, &targets, &indices, &all).unwrap();
        match tree.nodes[0] {
            ClassNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, oracle.feature);
                assert!((threshold - oracle.threshold).abs() < 1e-12);
                assert_eq!(feature, 1, "the clean threshold lives on feature 1");
            }
            ClassNode::Leaf { .. } => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn pure_nodes_become_leaves() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let targets = vec![1, 1, 1];
        let indices = vec![0, 1, 2];
        let mut rng = rng_for(1, "pure", &[]);
        let tree = grow_class_tree(&rows, &targets, &indices, 5, 2, 1, &mut rng);
        assert_eq!(tree.nodes, vec![ClassNode::Leaf { class: 1 }]);
    }

    #[test]
    fn depth_limit_is_respected() {
        let table = blobs(30, 4, 2.0, 9);
        let targets: Vec<usize> = table.labels.iter().map(|c| c.code()).collect();
        let indices: Vec<usize> = (0..table.n_rows()).collect();
        let mut rng = rng_for(2, "depth", &[]);
        let tree = grow_class_tree(&table.rows, &targets, &indices, 3, 2, 4, &mut rng);
        fn depth_of(nodes: &[ClassNode], at: usize) -> usize {
            match nodes[at] {
                ClassNode::Leaf { .. } => 0,
                ClassNode::Split { left, right, .. } => {
                    1 + depth_of(nodes, left).max(depth_of(nodes, right))
                }
            }
        }
        assert!(depth_of(&tree.nodes, 0) <= 3);
    }

    #[test]
    fn unanimous_forest_gives_pure_probabilities() {
        let params = ForestParams {
            trees: vec![
                ClassTree {
                    nodes: vec![ClassNode::Leaf { class: 2 }]
                };
                5
            ],
        };
        let probs = predict_proba(&params, &[&[0.0, 1.0]]);
        assert_eq!(probs, vec![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn vote_fractions_sum_to_one_and_ignore_tree_order() {
        let table = blobs(20, 3, 1.5, 10);
        let spec = ModelSpec::new(ModelKind::RandomForest, 3)
            .with("n_trees", 31)
            .with("max_depth", 6);
        let model = train_model(&spec, &table).unwrap();
        let probs = model_proba(&model, &table).unwrap();
        for p in &probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let reversed = match &model.params {
            ModelParams::Forest(f) => {
                let mut f = f.clone();
                f.trees.reverse();
                f
            }
            _ => unreachable!(),
        };
        let rows: Vec<&[f64]> = table.rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(probs, predict_proba(&reversed, &rows));
    }

    #[test]
    fn forest_separates_blobs() {
        let table = blobs(25, 4, 0.8, 11);
        let spec = ModelSpec::new(ModelKind::RandomForest, 5)
            .with("n_trees", 50)
            .with("max_depth", 8);
        let model = train_model(&spec, &table).unwrap();
        let p = predict(&model, &table).unwrap();
        let acc = p.iter().zip(&table.labels).filter(|(a, b)| a == b).count() as f64
            / table.n_rows() as f64;
        assert!(acc > 0.95, "train accuracy {acc}");
    }

    #[test]
    fn forest_training_is_deterministic() {
        let table = blobs(15, 3, 1.0, 12);
        let spec = ModelSpec::new(ModelKind::RandomForest, 9).with("n_trees", 40);
        let a = train_model(&spec, &table).unwrap();
        let b = train_model(&spec, &table).unwrap();
        assert_eq!(a, b);
    }
}
