//! One-way ANOVA F statistics and feature ranking.

use serde::{Deserialize, Serialize};

use super::{column_modality, FeatureTable, Modality};
use crate::{parallel, Error, Result};

/// Sum-of-squares decomposition for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaComponents {
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub f: f64,
    pub p: f64,
}

/// Ranked feature entry produced by [`anova_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub name: String,
    pub f: f64,
    pub p: f64,
}

/// One-way ANOVA over `groups`, one slice of observations per group.
///
/// Requires at least two groups and at least two observations in each.
/// Degenerate cases keep the conventional limits: zero within-group
/// variance with any between-group spread gives `F = +inf, p = 0`; a
/// completely constant feature gives `F = 0, p = 1`.
pub fn anova_components(groups: &[&[f64]]) -> Result<AnovaComponents> {
    if groups.len() < 2 {
        return Err(Error::InvalidGrouping(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::InvalidGrouping(format!(
                "group {i} has {} observations, need at least 2",
                g.len()
            )));
        }
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrouping(format!(
                "group {i} contains non-finite value {v}"
            )));
        }
    }

    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand_mean = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n_total as f64;

    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let d = mean - grand_mean;
        ss_between += g.len() as f64 * d * d;
        ss_within += g.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
    }

    let df_between = groups.len() - 1;
    let df_within = n_total - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let (f, p) = if ms_within == 0.0 {
        if ms_between > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let f = ms_between / ms_within;
        (f, f_survival(f, df_between as f64, df_within as f64))
    };

    Ok(AnovaComponents {
        ss_between,
        ss_within,
        ss_total: ss_between + ss_within,
        df_between,
        df_within,
        f,
        p,
    })
}

/// F statistic and p-value for `groups`; see [`anova_components`].
pub fn anova_f(groups: &[&[f64]]) -> Result<(f64, f64)> {
    let c = anova_components(groups)?;
    Ok((c.f, c.p))
}

/// Per-column ANOVA of `table` grouped by condition label.
///
/// Fit this on training rows only; pass the training subset.
pub fn anova_table(table: &FeatureTable) -> Result<Vec<AnovaResult>> {
    table.validate()?;
    let columns: Vec<usize> = (0..table.n_cols()).collect();
    parallel::try_map_slice(&columns, |&col| {
        let mut groups: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (row, &label) in table.rows.iter().zip(&table.labels) {
            groups[label.code()].push(row[col]);
        }
        let present: Vec<&[f64]> = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| g.as_slice())
            .collect();
        let (f, p) = anova_f(&present)?;
        Ok(AnovaResult {
            name: table.column_names[col].clone(),
            f,
            p,
        })
    })
}

/// Pick the top-F features per modality.
///
/// Results are ranked by descending F with ties broken by ascending name,
/// so equal scores always select the same features. The returned list is
/// the AE block followed by the vision block. When a modality has fewer
/// columns than requested the count is clamped and a warning recorded.
pub fn select_top_features(
    results: &[AnovaResult],
    top_k_ae: usize,
    top_k_vision: usize,
) -> (Vec<String>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut ae: Vec<&AnovaResult> = Vec::new();
    let mut vision: Vec<&AnovaResult> = Vec::new();
    for r in results {
        match column_modality(&r.name) {
            Some(Modality::Ae) => ae.push(r),
            Some(Modality::Vision) => vision.push(r),
            None => warnings.push(format!(
                "column {:?} belongs to no modality catalog; excluded from selection",
                r.name
            )),
        }
    }

    let mut take = |pool: &mut Vec<&AnovaResult>, k: usize, label: &str| -> Vec<String> {
        pool.sort_by(|a, b| b.f.total_cmp(&a.f).then_with(|| a.name.cmp(&b.name)));
        let k = if k > pool.len() {
            warnings.push(format!(
                "requested top {k} {label} features but only {} available; clamping",
                pool.len()
            ));
            pool.len()
        } else {
            k
        };
        pool[..k].iter().map(|r| r.name.clone()).collect()
    };

    let mut selected = take(&mut ae, top_k_ae, "AE");
    selected.extend(take(&mut vision, top_k_vision, "vision"));
    (selected, warnings)
}

/// Survival function of the F distribution, 1 - CDF(f; d1, d2).
fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    // 1 - CDF expressed directly through the regularized incomplete beta:
    // P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2).
    let x = d2 / (d2 + d1 * f);
    incomplete_beta_reg(d2 / 2.0, d1 / 2.0, x)
}

/// Regularized incomplete beta I_x(a, b) via Lentz continued fractions.
fn incomplete_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only below the symmetry point.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TOL: f64 = 1e-12;
    const FPMIN: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            return h;
        }
    }
    h
}

/// Log-gamma by the Lanczos approximation (g = 7), valid for x > 0.
fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
