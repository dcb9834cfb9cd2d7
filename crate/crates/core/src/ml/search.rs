//! Hyperparameter grid search with stratified k-fold cross-validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{predict, train, HyperValue, ModelKind, ModelSpec};
use crate::fusion::{Condition, FeatureTable};
use crate::rng::{derive_seed, rng_for};
use crate::{parallel, Error, Result};

const CV_FOLDS: usize = 3;

/// Named hyperparameter axes; the cartesian product defines the grid.
/// An empty grid denotes the single all-defaults configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub axes: BTreeMap<String, Vec<HyperValue>>,
}

impl ParamGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(mut self, name: &str, values: Vec<HyperValue>) -> Self {
        self.axes.insert(name.into(), values);
        self
    }

    /// All grid points in a fixed order: names sorted, the last axis
    /// cycling fastest.
    pub fn points(&self, kind: ModelKind, rng_seed: u64) -> Vec<ModelSpec> {
        let names: Vec<&String> = self.axes.keys().collect();
        let mut specs = vec![ModelSpec::new(kind, rng_seed)];
        for name in names {
            let values = &self.axes[name];
            let mut next = Vec::with_capacity(specs.len() * values.len());
            for spec in &specs {
                for &v in values {
                    next.push(spec.clone().with(name, v));
                }
            }
            specs = next;
        }
        specs
    }
}

/// Row indices per fold, stratified by class.
///
/// Each class is shuffled with its own counter-derived stream and dealt
/// round-robin, so per-class fold sizes differ by at most one and the
/// assignment depends only on the labels and the seed.
pub fn stratified_kfold(labels: &[Condition], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Split(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label.code()].push(i);
    }
    let mut folds = vec![Vec::new(); k];
    for (c, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k {
            return Err(Error::Split(format!(
                "class {} has {} row(s); {k}-fold needs at least {k}",
                Condition::from_code(c).unwrap(),
                rows.len()
            )));
        }
        let mut shuffled = rows.clone();
        let mut rng = rng_for(seed, "cv-fold", &[c as u64]);
        for i in (1..shuffled.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            shuffled.swap(i, j);
        }
        for (i, &row) in shuffled.iter().enumerate() {
            folds[i % k].push(row);
        }
    }
    if folds.iter().any(|f| f.is_empty()) {
        return Err(Error::Split("no rows to fold".into()));
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// One evaluated grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub spec: ModelSpec,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchOutcome {
    pub best: ModelSpec,
    pub points: Vec<GridPoint>,
}

/// Exhaustive 3-fold cross-validated search over `grid`.
///
/// Ties on mean accuracy prefer the smaller model (trained parameter
/// count), then the lexicographically smaller hyperparameter set. The
/// returned best spec carries `seed` itself so downstream training is
/// reproducible from the search inputs alone.
pub fn grid_search(
    kind: ModelKind,
    grid: &ParamGrid,
    table: &FeatureTable,
    seed: u64,
) -> Result<GridSearchOutcome> {
    table.validate()?;
    let specs = grid.points(kind, seed);
    if specs.is_empty() {
        return Err(Error::Config("hyperparameter grid has an empty axis".into()));
    }
    for spec in &specs {
        spec.validate()?;
    }
    let folds = stratified_kfold(&table.labels, CV_FOLDS, seed)?;

    // Flatten (point, fold) cells for one parallel pass.
    let n_cells = specs.len() * CV_FOLDS;
    let cell_accuracies = parallel::try_map_indices(n_cells, |cell| {
        let point_idx = cell / CV_FOLDS;
        let fold_idx = cell % CV_FOLDS;
        let mut train_rows: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold_idx)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        train_rows.sort_unstable();
        let train_table = table.subset(&train_rows);
        let val_table = table.subset(&folds[fold_idx]);

        let mut spec_cv = specs[point_idx].clone();
        spec_cv.rng_seed = derive_seed(seed, "cv", &[point_idx as u64, fold_idx as u64]);
        let model = train(&spec_cv, &train_table)?;
        let predicted = predict(&model, &val_table)?;
        let hits = predicted
            .iter()
            .zip(&val_table.labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / val_table.n_rows() as f64)
    })?;

    let points: Vec<GridPoint> = specs
        .iter()
        .enumerate()
        .map(|(p, spec)| {
            let fold_accuracies = cell_accuracies[p * CV_FOLDS..(p + 1) * CV_FOLDS].to_vec();
            let mean_accuracy = fold_accuracies.iter().sum::<f64>() / CV_FOLDS as f64;
            GridPoint {
                spec: spec.clone(),
                fold_accuracies,
                mean_accuracy,
            }
        })
        .collect();

    let n_cols = table.n_cols();
    let mut best = 0;
    for i in 1..points.len() {
        let cand = &points[i];
        let cur = &points[best];
        let better = match cand.mean_accuracy.total_cmp(&cur.mean_accuracy) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                match cand
                    .spec
                    .parameter_count(n_cols)
                    .cmp(&cur.spec.parameter_count(n_cols))
                {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        cand.spec.lexicographic_cmp(&cur.spec) == std::cmp::Ordering::Less
                    }
                }
            }
        };
        if better {
            best = i;
        }
    }
    Ok(GridSearchOutcome {
        best: points[best].spec.clone(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::test_support::blobs;

    #[test]
    fn points_enumerate_the_cartesian_product_in_name_order() {
        let grid = ParamGrid::new()
            .add("n_trees", vec![30i64.into(), 50i64.into()])
            .add("max_depth", vec![3i64.into()]);
        let points = grid.points(ModelKind::RandomForest, 9);
        assert_eq!(points.len(), 2);
        // "max_depth" sorts before "n_trees", so n_trees cycles fastest.
        assert_eq!(points[0].hyperparameters["n_trees"], 30i64.into());
        assert_eq!(points[1].hyperparameters["n_trees"], 50i64.into());
        assert!(points.iter().all(|p| p.rng_seed == 9));

        let empty = ParamGrid::new().points(ModelKind::Mlp, 3);
        assert_eq!(empty.len(), 1);
        assert!(empty[0].hyperparameters.is_empty());
    }

    #[test]
    fn kfold_partitions_rows_and_keeps_every_class() {
        let table = blobs(9, 2, 0.5, 30);
        let folds = stratified_kfold(&table.labels, 3, 11).unwrap();
        assert_eq!(folds.len(), 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..27).collect::<Vec<_>>());
        for fold in &folds {
            for c in Condition::ALL {
                assert!(fold.iter().any(|&i| table.labels[i] == c));
            }
            assert_eq!(fold.len(), 9);
        }
        assert_eq!(folds, stratified_kfold(&table.labels, 3, 11).unwrap());
        assert_ne!(folds, stratified_kfold(&table.labels, 3, 12).unwrap());
    }

    #[test]
    fn kfold_rejects_class_smaller_than_k() {
        let labels = vec![
            Condition::NoHole,
            Condition::NoHole,
            Condition::NoHole,
            Condition::Hole3mm,
            Condition::Hole3mm,
        ];
        assert!(matches!(
            stratified_kfold(&labels, 3, 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn single_point_search_returns_it_with_the_search_seed() {
        let table = blobs(10, 3, 0.5, 31);
        let grid = ParamGrid::new().add("c", vec![0.5.into()]);
        let out = grid_search(ModelKind::LogisticRegression, &grid, &table, 17).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.best.rng_seed, 17);
        assert_eq!(out.best.hyperparameters["c"], 0.5.into());
        let p = &out.points[0];
        assert_eq!(p.fold_accuracies.len(), 3);
        let mean = p.fold_accuracies.iter().sum::<f64>() / 3.0;
        assert_eq!(p.mean_accuracy, mean);
    }

    #[test]
    fn fold_accuracy_matches_a_manual_retrain() {
        let table = blobs(8, 3, 1.0, 32);
        let grid = ParamGrid::new().add("n_trees", vec![30i64.into(), 40i64.into()]);
        let seed = 21;
        let out = grid_search(ModelKind::RandomForest, &grid, &table, seed).unwrap();

        let (point_idx, fold_idx) = (1, 2);
        let folds = stratified_kfold(&table.labels, 3, seed).unwrap();
        let mut train_rows: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold_idx)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        train_rows.sort_unstable();
        let mut spec = out.points[point_idx].spec.clone();
        spec.rng_seed = derive_seed(seed, "cv", &[point_idx as u64, fold_idx as u64]);
        let model = train(&spec, &table.subset(&train_rows)).unwrap();
        let val = table.subset(&folds[fold_idx]);
        let predicted = predict(&model, &val).unwrap();
        let acc = predicted
            .iter()
            .zip(&val.labels)
            .filter(|(a, b)| a == b)
            .count() as f64
            / val.n_rows() as f64;
        assert_eq!(out.points[point_idx].fold_accuracies[fold_idx], acc);
    }

    #[test]
    fn accuracy_ties_prefer_the_smaller_model() {
        // Trivially separable blobs: both forest sizes reach the same CV
        // accuracy, so the 30-tree model must win.
        let table = blobs(8, 3, 0.2, 33);
        let grid = ParamGrid::new().add("n_trees", vec![200i64.into(), 30i64.into()]);
        let out = grid_search(ModelKind::RandomForest, &grid, &table, 5).unwrap();
        assert_eq!(
            out.points[0].mean_accuracy, out.points[1].mean_accuracy,
            "expected a tie on this data"
        );
        assert_eq!(out.best.hyperparameters["n_trees"], 30i64.into());
    }

    #[test]
    fn search_is_deterministic() {
        let table = blobs(8, 3, 1.0, 34);
        let grid = ParamGrid::new().add("c", vec![0.1.into(), 1.0.into()]);
        let a = grid_search(ModelKind::LogisticRegression, &grid, &table, 2).unwrap();
        let b = grid_search(ModelKind::LogisticRegression, &grid, &table, 2).unwrap();
        assert_eq!(a, b);
    }
}
