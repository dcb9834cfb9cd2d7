//! Z-score standardization fitted on training rows only.

use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::{Error, Result};

/// Per-column standardization parameters.
///
/// `columns`, `means`, and `stds` run in lockstep over the retained
/// features; columns that were constant on the fit data are listed in
/// `dropped` and removed from any table the scaler is applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub dropped: Vec<String>,
}

/// Fit means and sample standard deviations (n - 1) on `table`.
///
/// Call with the training table only; applying the result to held-out
/// rows is what keeps the evaluation leak-free.
pub fn zscore_fit(table: &FeatureTable) -> Result<ScalerParams> {
    table.validate()?;
    if table.n_rows() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows to fit a scaler, got {}",
            table.n_rows()
        )));
    }
    let n = table.n_rows() as f64;
    let mut params = ScalerParams {
        columns: Vec::new(),
        means: Vec::new(),
        stds: Vec::new(),
        dropped: Vec::new(),
    };
    for (j, name) in table.column_names.iter().enumerate() {
        let first = table.rows[0][j];
        if table.rows.iter().all(|r| r[j] == first) {
            params.dropped.push(name.clone());
            continue;
        }
        let mean = table.rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let ss: f64 = table.rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum();
        let std = (ss / (n - 1.0)).sqrt();
        if std == 0.0 {
            params.dropped.push(name.clone());
            continue;
        }
        params.columns.push(name.clone());
        params.means.push(mean);
        params.stds.push(std);
    }
    if params.columns.is_empty() {
        return Err(Error::InvalidInput(
            "every column is constant; nothing to standardize".into(),
        ));
    }
    Ok(params)
}

/// Standardize `table` to the scaler's columns: (x - mean) / std.
///
/// Columns the scaler dropped are removed; a column the scaler retains
/// but the table lacks is a schema error.
pub fn zscore_apply(params: &ScalerParams, table: &FeatureTable) -> Result<FeatureTable> {
    table.validate()?;
    let indices: Vec<usize> = params
        .columns
        .iter()
        .map(|name| {
            table
                .column_index(name)
                .ok_or_else(|| Error::Schema(format!("scaler column {name:?} missing from table")))
        })
        .collect::<Result<_>>()?;
    let rows = table
        .rows
        .iter()
        .map(|row| {
            indices
                .iter()
                .enumerate()
                .map(|(k, &j)| (row[j] - params.means[k]) / params.stds[k])
                .collect()
        })
        .collect();
    Ok(FeatureTable {
        column_names: params.columns.clone(),
        rows,
        labels: table.labels.clone(),
        layer_indices: table.layer_indices.clone(),
        specimen_ids: table.specimen_ids.clone(),
        provenance: table.provenance.clone(),
    })
}
