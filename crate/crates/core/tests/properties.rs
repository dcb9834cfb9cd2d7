//! Generative invariant checks: properties that must hold for every input,
//! exercised over randomized windows, point sets, and tables with shrinking.

use proptest::prelude::*;

use ded_monitor::ae::{
    frequency_domain_features, time_domain_features, winsorize_mad, AeFeatureConfig,
    FREQ_FEATURE_NAMES, TIME_FEATURE_NAMES, WINDOW_LEN,
};
use ded_monitor::fusion::{
    anova_components, smote_augment, zscore_apply, zscore_fit, Condition, FeatureTable,
    Provenance,
};
use ded_monitor::io::{read_feature_table, write_feature_table};
use ded_monitor::ml::{classification_metrics, stratified_kfold};
use ded_monitor::rng::derive_seed;
use ded_monitor::signal::{fft, fft_complex};
use ded_monitor::vision::{convex_hull, min_enclosing_circle, Point};

fn time_feature(features: &[f64; 16], name: &str) -> f64 {
    let i = TIME_FEATURE_NAMES.iter().position(|&n| n == name).unwrap();
    features[i]
}

fn freq_feature(features: &[f64; 20], name: &str) -> f64 {
    let i = FREQ_FEATURE_NAMES.iter().position(|&n| n == name).unwrap();
    features[i]
}

/// A window strategy that avoids the degenerate constant case.
fn window_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-100.0f64..100.0, WINDOW_LEN)
        .prop_filter("constant window", |w| w.iter().any(|&x| x != w[0]))
}

fn condition_strategy() -> impl Strategy<Value = Condition> {
    prop_oneof![
        Just(Condition::NoHole),
        Just(Condition::Hole3mm),
        Just(Condition::Hole5mm),
    ]
}

/// Balanced all-real table: `per_class` rows per condition, values in a
/// bounded range, distinct specimen ids.
fn table_strategy(per_class: usize, cols: usize) -> impl Strategy<Value = FeatureTable> {
    proptest::collection::vec(-100.0f64..100.0, per_class * 3 * cols).prop_map(move |values| {
        let mut table =
            FeatureTable::empty((0..cols).map(|j| format!("f{j}")).collect());
        let mut it = values.into_iter();
        for condition in Condition::ALL {
            for i in 0..per_class {
                table.rows.push((0..cols).map(|_| it.next().unwrap()).collect());
                table.labels.push(condition);
                table.layer_indices.push(2 + i % 4);
                table
                    .specimen_ids
                    .push(format!("{}-{i:02}", condition.as_str()));
                table.provenance.push(Provenance::Real);
            }
        }
        table
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ------------------------------------------------------------------
    // Time-domain descriptor ordering and identities.

    #[test]
    fn time_feature_inequalities(window in window_strategy()) {
        let f = time_domain_features(&window).unwrap();
        let n = window.len() as f64;
        let maa = time_feature(&f, "maa");
        let rms = time_feature(&f, "rms");
        let peak = time_feature(&f, "peak");
        prop_assert!(maa > 0.0);
        // Quadratic mean dominates absolute mean dominates nothing negative.
        prop_assert!(rms >= maa * (1.0 - 1e-12));
        prop_assert!(peak >= rms * (1.0 - 1e-12));
        prop_assert!(time_feature(&f, "peak_to_peak") <= 2.0 * peak * (1.0 + 1e-12));
        prop_assert!(time_feature(&f, "crest_factor") >= 1.0 - 1e-12);
        prop_assert!(time_feature(&f, "shape_factor") >= 1.0 - 1e-12);
        // Population kurtosis is at least 1 for any non-constant sample.
        prop_assert!(time_feature(&f, "kurtosis") >= 1.0 - 1e-12);
        let abs_energy = time_feature(&f, "abs_energy");
        prop_assert!((abs_energy - n * rms * rms).abs() <= 1e-9 * abs_energy.max(1.0));
        prop_assert!(time_feature(&f, "zero_crossings") <= n - 1.0);
        prop_assert!(time_feature(&f, "variance") >= 0.0);
        prop_assert!(time_feature(&f, "mad") >= 0.0);
    }

    // ------------------------------------------------------------------
    // Spectral descriptor ranges and orderings.

    #[test]
    fn frequency_feature_ranges(window in window_strategy()) {
        let rate = 500_000.0;
        let spectrum = fft(&window, rate).unwrap();
        let f = frequency_domain_features(&spectrum, &AeFeatureConfig::default()).unwrap();
        let nyquist = rate / 2.0;
        let centroid = freq_feature(&f, "spectral_centroid");
        prop_assert!((0.0..=nyquist).contains(&centroid));
        prop_assert!(freq_feature(&f, "spectral_bandwidth") >= 0.0);
        let n_bins = spectrum.magnitudes.len() as f64;
        let entropy = freq_feature(&f, "spectral_entropy");
        prop_assert!(entropy >= 0.0 && entropy <= n_bins.ln() * (1.0 + 1e-12));
        let flatness = freq_feature(&f, "spectral_flatness");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&flatness));
        // Both are cumulative-power thresholds, so 85% sits at or above 50%.
        prop_assert!(freq_feature(&f, "rolloff_85") >= freq_feature(&f, "median_frequency"));
        prop_assert!(freq_feature(&f, "peak_magnitude") > 0.0);
        prop_assert!(freq_feature(&f, "er_lowhigh") >= 0.0);
        let total: f64 = spectrum.magnitudes.iter().map(|m| m * m).sum();
        let bands: f64 = (1..=8)
            .map(|b| freq_feature(&f, &format!("band_energy_{b}")))
            .sum();
        prop_assert!((bands - total).abs() <= 1e-9 * total);
    }

    // ------------------------------------------------------------------
    // Parseval across window sizes.

    #[test]
    fn parseval_holds_for_all_power_of_two_lengths(
        exponent in 4usize..=11,
        seed_values in proptest::collection::vec(-10.0f64..10.0, 2048),
    ) {
        let n = 1 << exponent;
        let window = &seed_values[..n];
        let energy: f64 = window.iter().map(|x| x * x).sum();
        let full: f64 = fft_complex(window).unwrap().iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((full - n as f64 * energy).abs() <= 1e-9 * (n as f64 * energy).max(1.0));
    }

    // ------------------------------------------------------------------
    // Winsorization clamps without reordering.

    #[test]
    fn winsorize_bounds_and_monotonicity(
        samples in proptest::collection::vec(-1000.0f64..1000.0, 3..200),
    ) {
        let out = winsorize_mad(&samples).unwrap();
        prop_assert_eq!(out.len(), samples.len());
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &y in &out {
            prop_assert!((lo..=hi).contains(&y));
        }
        // Clamping is monotone: input order is preserved pairwise.
        for i in 0..samples.len() {
            for j in 0..samples.len() {
                if samples[i] <= samples[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Geometry: the hull encloses, the circle encloses, both are tight.

    #[test]
    fn hull_and_circle_enclose_every_point(
        coords in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
    ) {
        let points: Vec<Point> = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();

        let circle = min_enclosing_circle(&points).unwrap();
        let mut max_pairwise = 0.0f64;
        for (i, &a) in points.iter().enumerate() {
            prop_assert!(circle.center.dist(a) <= circle.radius + 1e-9);
            for &b in &points[i + 1..] {
                max_pairwise = max_pairwise.max(a.dist(b));
            }
        }
        // Two points at maximum separation force at least that diameter.
        prop_assert!(2.0 * circle.radius >= max_pairwise - 1e-9);
        prop_assert!(circle.radius <= max_pairwise + 1e-9);

        let hull = convex_hull(&points);
        if !hull.degenerate {
            prop_assert!(hull.area >= 0.0);
            // Counter-clockwise edges: every point lies on the left of
            // (or on) every edge.
            let v = &hull.vertices;
            for i in 0..v.len() {
                let a = v[i];
                let b = v[(i + 1) % v.len()];
                for &p in &points {
                    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                    prop_assert!(cross >= -1e-6, "point right of a hull edge: {cross}");
                }
            }
            // The circle of the hull is the circle of the set.
            let hull_circle = min_enclosing_circle(v).unwrap();
            prop_assert!((hull_circle.radius - circle.radius).abs() <= 1e-9);
        }
    }

    // ------------------------------------------------------------------
    // ANOVA: nonnegative F, p a probability, invariance under affine maps.

    #[test]
    fn anova_affine_invariance(
        g1 in proptest::collection::vec(-10.0f64..10.0, 3..12),
        g2 in proptest::collection::vec(-10.0f64..10.0, 3..12),
        g3 in proptest::collection::vec(-10.0f64..10.0, 3..12),
        scale in 0.5f64..3.0,
        shift in -5.0f64..5.0,
    ) {
        let groups = [g1.as_slice(), g2.as_slice(), g3.as_slice()];
        let c = anova_components(&groups).unwrap();
        prop_assert!(c.f >= 0.0);
        prop_assert!((0.0..=1.0).contains(&c.p));
        prop_assert!(
            (c.ss_between + c.ss_within - c.ss_total).abs() <= 1e-9 * c.ss_total.max(1e-12)
        );

        let mapped: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|x| scale * x + shift).collect())
            .collect();
        let slices: Vec<&[f64]> = mapped.iter().map(|g| g.as_slice()).collect();
        let cm = anova_components(&slices).unwrap();
        if c.f.is_finite() {
            prop_assert!(
                (cm.f - c.f).abs() <= 1e-6 * c.f.max(1.0),
                "F changed under affine map: {} vs {}", cm.f, c.f
            );
        }
    }

    // ------------------------------------------------------------------
    // Scaling: standardized training columns come out centered and unit.

    #[test]
    fn zscore_centers_and_scales(table in table_strategy(4, 3)) {
        let scaler = zscore_fit(&table).unwrap();
        let scaled = zscore_apply(&scaler, &table).unwrap();
        let n = scaled.rows.len() as f64;
        for j in 0..scaled.column_names.len() {
            let mean: f64 = scaled.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            let var: f64 =
                scaled.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!((var - 1.0).abs() < 1e-9, "column {j} variance {var}");
        }
    }

    // ------------------------------------------------------------------
    // SMOTE: synthetic rows interpolate real same-class rows.

    #[test]
    fn smote_rows_interpolate_their_class(table in table_strategy(4, 3), extra in 1usize..=4) {
        let target = 4 + extra;
        let augmented = smote_augment(&table, 2, target, 99).unwrap();
        prop_assert_eq!(augmented.class_counts(), [target; 3]);
        for i in 0..augmented.rows.len() {
            if augmented.provenance[i] != Provenance::SyntheticSmote {
                continue;
            }
            let class = augmented.labels[i];
            let s = &augmented.rows[i];
            let mut ok = false;
            'outer: for a in 0..table.rows.len() {
                if table.labels[a] != class {
                    continue;
                }
                for b in 0..table.rows.len() {
                    if a == b || table.labels[b] != class {
                        continue;
                    }
                    let (r, nb) = (&table.rows[a], &table.rows[b]);
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for j in 0..s.len() {
                        let d = nb[j] - r[j];
                        num += (s[j] - r[j]) * d;
                        den += d * d;
                    }
                    if den == 0.0 {
                        continue;
                    }
                    let u = num / den;
                    let residual = (0..s.len())
                        .map(|j| (s[j] - r[j] - u * (nb[j] - r[j])).abs())
                        .fold(0.0f64, f64::max);
                    if residual <= 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&u) {
                        ok = true;
                        break 'outer;
                    }
                }
            }
            prop_assert!(ok, "synthetic row {i} not on a segment between real rows");
        }
    }

    // ------------------------------------------------------------------
    // Stratified folds: a disjoint cover, classes spread within one row.

    #[test]
    fn stratified_folds_partition_and_balance(
        table in table_strategy(6, 2),
        k in 2usize..=4,
    ) {
        let folds = stratified_kfold(&table.labels, k, 7).unwrap();
        let n = table.labels.len();
        let mut seen = vec![false; n];
        for fold in &folds {
            for &i in fold {
                prop_assert!(!seen[i], "row {i} appears in two folds");
                seen[i] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|s| s), "folds do not cover every row");
        for class in Condition::ALL {
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| table.labels[i] == class).count())
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "class {class:?} split {per_fold:?}");
        }
    }

    // ------------------------------------------------------------------
    // Metrics stay inside their ranges and count every row once.

    #[test]
    fn metrics_are_well_formed(
        rows in proptest::collection::vec(
            (condition_strategy(), condition_strategy(), 0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
            3..60,
        ),
    ) {
        let truth: Vec<Condition> = rows.iter().map(|r| r.0).collect();
        let predicted: Vec<Condition> = rows.iter().map(|r| r.1).collect();
        let probabilities: Vec<[f64; 3]> = rows
            .iter()
            .map(|r| {
                let sum = r.2 + r.3 + r.4;
                [r.2 / sum, r.3 / sum, r.4 / sum]
            })
            .collect();
        let report = classification_metrics(&truth, &predicted, &probabilities).unwrap();
        let n = truth.len();
        for v in [
            report.accuracy,
            report.precision,
            report.recall,
            report.f1,
            report.macro_precision,
            report.macro_recall,
            report.macro_f1,
            report.auc_roc,
        ] {
            prop_assert!((0.0..=1.0).contains(&v), "metric {v} out of range");
        }
        let confusion_total: usize = report
            .confusion_matrix
            .iter()
            .map(|row| row.iter().sum::<usize>())
            .sum();
        prop_assert_eq!(confusion_total, n);
        let b = &report.binarized;
        prop_assert_eq!(b.tp + b.fp + b.fn_ + b.tn, n);
    }

    // ------------------------------------------------------------------
    // Seed derivation: deterministic, label- and counter-sensitive.

    #[test]
    fn derived_seeds_separate_streams(root in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assert_eq!(derive_seed(root, "alpha", &[a]), derive_seed(root, "alpha", &[a]));
        prop_assert_ne!(derive_seed(root, "alpha", &[a]), derive_seed(root, "beta", &[a]));
        if a != b {
            prop_assert_ne!(derive_seed(root, "alpha", &[a]), derive_seed(root, "alpha", &[b]));
        }
    }

    // ------------------------------------------------------------------
    // Feature tables survive the CSV round trip bit for bit.

    #[test]
    fn feature_table_csv_round_trip(table in table_strategy(3, 4)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_feature_table(&path, &table).unwrap();
        let read_back = read_feature_table(&path).unwrap();
        prop_assert_eq!(read_back, table);
    }
}
