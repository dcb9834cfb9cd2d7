//! Training-set augmentation: SMOTE interpolation, Gaussian perturbation,
//! and class balancing.
//!
//! All synthetic rows derive from real rows only and carry a synthetic
//! provenance tag. Randomness is counter-based: every synthetic row owns a
//! generator keyed by (seed, stream, class or row, index), so output is
//! independent of generation order.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Condition, FeatureTable, Provenance};
use crate::{rng::rng_for, Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Indices (into `real`) of the k nearest rows to `real[source]`,
/// excluding the source itself. Ties break toward the lower row index.
fn k_nearest(table: &FeatureTable, real: &[usize], source: usize, k: usize) -> Vec<usize> {
    let src_row = &table.rows[real[source]];
    let mut by_dist: Vec<(f64, usize)> = real
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != source)
        .map(|(i, &row)| (squared_distance(src_row, &table.rows[row]), i))
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    by_dist.truncate(k);
    by_dist.into_iter().map(|(_, i)| i).collect()
}

/// Grow every class to `target_count_per_class` rows with SMOTE.
///
/// Each synthetic row interpolates a random real source row of the class
/// toward one of its `k_neighbors` nearest same-class real neighbors
/// (Euclidean distance, so the table should already be standardized):
/// `r + u * (n - r)` with `u` uniform on [0, 1). Classes already at or
/// above the target gain nothing. Every class must have at least
/// `k_neighbors + 1` real rows.
pub fn smote_augment(
    table: &FeatureTable,
    k_neighbors: usize,
    target_count_per_class: usize,
    seed: u64,
) -> Result<FeatureTable> {
    table.validate()?;
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be >= 1".into()));
    }

    let mut real_by_class: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &i in &table.real_row_indices() {
        real_by_class[table.labels[i].code()].push(i);
    }
    for class in Condition::ALL {
        let have = real_by_class[class.code()].len();
        if have < k_neighbors + 1 {
            return Err(Error::Augmentation {
                class: class.as_str().into(),
                detail: format!(
                    "{have} real rows but SMOTE with k = {k_neighbors} needs at least {}",
                    k_neighbors + 1
                ),
            });
        }
    }

    let counts = table.class_counts();
    let mut out = table.clone();
    for class in Condition::ALL {
        let real = &real_by_class[class.code()];
        let needed = target_count_per_class.saturating_sub(counts[class.code()]);
        for synth_idx in 0..needed {
            let mut rng = rng_for(seed, "smote", &[class.code() as u64, synth_idx as u64]);
            let source = rng.gen_range(0..real.len());
            let neighbors = k_nearest(table, real, source, k_neighbors);
            let neighbor = neighbors[rng.gen_range(0..neighbors.len())];
            let u: f64 = rng.gen();

            let src = real[source];
            let nbr = real[neighbor];
            let row: Vec<f64> = table.rows[src]
                .iter()
                .zip(&table.rows[nbr])
                .map(|(&r, &n)| r + u * (n - r))
                .collect();
            out.rows.push(row);
            out.labels.push(class);
            out.layer_indices.push(table.layer_indices[src]);
            out.specimen_ids.push(table.specimen_ids[src].clone());
            out.provenance.push(Provenance::SyntheticSmote);
        }
    }
    Ok(out)
}

/// Append `copies` noisy duplicates of every real row.
///
/// Noise is independent per feature, N(0, (noise_fraction * sigma)^2) with
/// sigma the per-feature sample std over the table's real rows. Labels,
/// layer indices, and specimen ids are copied from the source row;
/// provenance is marked synthetic-noise.
pub fn gaussian_perturb(
    table: &FeatureTable,
    noise_fraction: f64,
    copies: usize,
    seed: u64,
) -> Result<FeatureTable> {
    table.validate()?;
    if !(noise_fraction > 0.0 && noise_fraction.is_finite()) {
        return Err(Error::Config(format!(
            "noise_fraction must be positive and finite, got {noise_fraction}"
        )));
    }
    let real = table.real_row_indices();
    if real.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 real rows to estimate feature spread, got {}",
            real.len()
        )));
    }

    let n = real.len() as f64;
    let sigmas: Vec<f64> = (0..table.n_cols())
        .map(|j| {
            let mean = real.iter().map(|&i| table.rows[i][j]).sum::<f64>() / n;
            let ss: f64 = real
                .iter()
                .map(|&i| {
                    let d = table.rows[i][j] - mean;
                    d * d
                })
                .sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();

    let mut out = table.clone();
    for (row_pos, &i) in real.iter().enumerate() {
        for copy in 0..copies {
            let mut rng = rng_for(seed, "noise", &[row_pos as u64, copy as u64]);
            let row: Vec<f64> = table.rows[i]
                .iter()
                .zip(&sigmas)
                .map(|(&x, &sigma)| {
                    let z: f64 = rng.sample(StandardNormal);
                    x + noise_fraction * sigma * z
                })
                .collect();
            out.rows.push(row);
            out.labels.push(table.labels[i]);
            out.layer_indices.push(table.layer_indices[i]);
            out.specimen_ids.push(table.specimen_ids[i].clone());
            out.provenance.push(Provenance::SyntheticNoise);
        }
    }
    Ok(out)
}

/// Equalize class counts by SMOTE-filling every class up to the largest.
pub fn balance_classes(table: &FeatureTable, k_neighbors: usize, seed: u64) -> Result<FeatureTable> {
    let target = table.class_counts().into_iter().max().unwrap_or(0);
    smote_augment(table, k_neighbors, target, seed)
}
