//! Windowed 72-feature extraction (raw + filtered variants) and per-layer
//! mean/std aggregation.

use std::sync::OnceLock;

use crate::signal::{apply_iir, design_butterworth_highpass, fft, Spectrum};
use crate::{Error, Result};

use super::segment::LayerSegmentAE;
use super::winsorize::{median_in_place, winsorize_mad};

/// Analysis window length in samples; also fixes the FFT size.
pub const WINDOW_LEN: usize = 1024;

pub const TIME_FEATURE_NAMES: [&str; 16] = [
    "mean",
    "variance",
    "std",
    "skewness",
    "kurtosis",
    "maa",
    "rms",
    "peak",
    "peak_to_peak",
    "crest_factor",
    "impulse_factor",
    "shape_factor",
    "clearance_factor",
    "abs_energy",
    "zero_crossings",
    "mad",
];

pub const FREQ_FEATURE_NAMES: [&str; 20] = [
    "spectral_centroid",
    "spectral_bandwidth",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_entropy",
    "spectral_flatness",
    "rolloff_85",
    "median_frequency",
    "peak_frequency",
    "peak_magnitude",
    "er_lowhigh",
    "band_energy",
    "band_energy_1",
    "band_energy_2",
    "band_energy_3",
    "band_energy_4",
    "band_energy_5",
    "band_energy_6",
    "band_energy_7",
    "band_energy_8",
];

pub const WINDOW_FEATURE_COUNT: usize = 72;
pub const LAYER_FEATURE_COUNT: usize = 144;

/// Filter and band parameters for AE feature extraction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeFeatureConfig {
    pub filter_cutoff_hz: f64,
    pub filter_order: usize,
    /// Split frequency of the low/high energy ratio.
    pub band_split_hz: f64,
    /// Named band of interest, inclusive edges.
    pub named_band_low_hz: f64,
    pub named_band_high_hz: f64,
}

impl Default for AeFeatureConfig {
    fn default() -> Self {
        AeFeatureConfig {
            filter_cutoff_hz: 150_000.0,
            filter_order: 4,
            band_split_hz: 150_000.0,
            named_band_low_hz: 150_000.0,
            named_band_high_hz: 250_000.0,
        }
    }
}

impl AeFeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("filter_cutoff_hz", self.filter_cutoff_hz),
            ("band_split_hz", self.band_split_hz),
            ("named_band_low_hz", self.named_band_low_hz),
            ("named_band_high_hz", self.named_band_high_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.named_band_low_hz >= self.named_band_high_hz {
            return Err(Error::Config(format!(
                "named band is empty: [{}, {}]",
                self.named_band_low_hz, self.named_band_high_hz
            )));
        }
        if !(1..=8).contains(&self.filter_order) {
            return Err(Error::Config(format!(
                "filter_order must be in 1..=8, got {}",
                self.filter_order
            )));
        }
        Ok(())
    }
}

/// The 72 per-window values: 36 on the raw window, 36 on the filtered one.
#[derive(Debug, Clone)]
pub struct AeWindowFeatures {
    pub values: [f64; WINDOW_FEATURE_COUNT],
}

impl AeWindowFeatures {
    /// Compute the full catalog for one raw/filtered window pair.
    pub fn compute(
        raw: &[f64],
        filtered: &[f64],
        sample_rate_hz: f64,
        config: &AeFeatureConfig,
    ) -> Result<AeWindowFeatures> {
        let mut values = [0.0; WINDOW_FEATURE_COUNT];
        for (offset, window) in [(0, raw), (36, filtered)] {
            let t = time_domain_features(window)?;
            let spectrum = fft(window, sample_rate_hz)?;
            let f = frequency_domain_features(&spectrum, config)?;
            values[offset..offset + 16].copy_from_slice(&t);
            values[offset + 16..offset + 36].copy_from_slice(&f);
        }
        Ok(AeWindowFeatures { values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        window_feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Per-layer aggregate: mean and std of each window feature.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AeLayerFeatures {
    pub layer_index: usize,
    /// 144 values ordered as `layer_feature_names()`.
    pub values: Vec<f64>,
    /// Windows that contributed (degenerate windows excluded).
    pub window_count: usize,
    pub skipped_windows: usize,
}

impl AeLayerFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        layer_feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// `raw_<name>` then `filtered_<name>` over the 36-feature catalog.
pub fn window_feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(WINDOW_FEATURE_COUNT);
        for prefix in ["raw", "filtered"] {
            for n in TIME_FEATURE_NAMES.iter().chain(FREQ_FEATURE_NAMES.iter()) {
                names.push(format!("{prefix}_{n}"));
            }
        }
        names
    })
}

/// `<window name>_mean`, `<window name>_std` pairs, 144 total.
pub fn layer_feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(LAYER_FEATURE_COUNT);
        for base in window_feature_names() {
            names.push(format!("{base}_mean"));
            names.push(format!("{base}_std"));
        }
        names
    })
}

/// The 16 time-domain descriptors of one window.
///
/// Variance and std use the n-1 denominator; skewness and kurtosis use
/// population central moments, kurtosis non-excess.
pub fn time_domain_features(window: &[f64]) -> Result<[f64; 16]> {
    let n = window.len();
    if n != WINDOW_LEN {
        return Err(Error::InvalidInput(format!(
            "time-domain features need a {WINDOW_LEN}-sample window, got {n}"
        )));
    }
    let nf = n as f64;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_sqrt_abs = 0.0;
    let mut max_v = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    for &x in window {
        sum += x;
        sum_abs += x.abs();
        sum_sq += x * x;
        sum_sqrt_abs += x.abs().sqrt();
        max_v = max_v.max(x);
        min_v = min_v.min(x);
    }
    let mean = sum / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in window {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::DegenerateWindow(
            "zero-variance window skipped".into(),
        ));
    }
    let std = variance.sqrt();
    let skewness = m3 / (m2 * m2.sqrt());
    let kurtosis = m4 / (m2 * m2);
    let maa = sum_abs / nf;
    let rms = (sum_sq / nf).sqrt();
    let peak = max_v.abs().max(min_v.abs());
    let peak_to_peak = max_v - min_v;
    let crest_factor = peak / rms;
    let impulse_factor = peak / maa;
    let shape_factor = rms / maa;
    let mean_sqrt_abs = sum_sqrt_abs / nf;
    let clearance_factor = peak / (mean_sqrt_abs * mean_sqrt_abs);
    let abs_energy = sum_sq;
    let zero_crossings = window
        .windows(2)
        .filter(|pair| pair[0] * pair[1] < 0.0)
        .count() as f64;
    let mut scratch = window.to_vec();
    let median = median_in_place(&mut scratch);
    for (d, &x) in scratch.iter_mut().zip(window.iter()) {
        *d = (x - median).abs();
    }
    let mad = median_in_place(&mut scratch);
    Ok([
        mean,
        variance,
        std,
        skewness,
        kurtosis,
        maa,
        rms,
        peak,
        peak_to_peak,
        crest_factor,
        impulse_factor,
        shape_factor,
        clearance_factor,
        abs_energy,
        zero_crossings,
        mad,
    ])
}

/// The 20 frequency-domain descriptors of one spectrum.
///
/// All moments weight bins by power (magnitude squared). The eight band
/// energies partition [0, Nyquist] exactly; the split-frequency bin, when it
/// exists, belongs to both sides of the energy ratio.
pub fn frequency_domain_features(
    spectrum: &Spectrum,
    config: &AeFeatureConfig,
) -> Result<[f64; 20]> {
    let m = spectrum.magnitudes.len();
    if m != spectrum.window_len / 2 + 1 || m < 2 {
        return Err(Error::InvalidInput(format!(
            "inconsistent spectrum: {m} bins for window length {}",
            spectrum.window_len
        )));
    }
    let freqs = &spectrum.frequencies_hz;
    let power: Vec<f64> = spectrum.magnitudes.iter().map(|v| v * v).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWindow("zero spectrum skipped".into()));
    }

    let centroid = freqs
        .iter()
        .zip(&power)
        .map(|(f, p)| f * p)
        .sum::<f64>()
        / total;
    let mut mu2 = 0.0;
    let mut mu3 = 0.0;
    let mut mu4 = 0.0;
    for (f, p) in freqs.iter().zip(&power) {
        let d = f - centroid;
        let d2 = d * d;
        mu2 += d2 * p;
        mu3 += d2 * d * p;
        mu4 += d2 * d2 * p;
    }
    mu2 /= total;
    mu3 /= total;
    mu4 /= total;
    let bandwidth = mu2.sqrt();
    let (skewness, kurtosis) = if mu2 > 0.0 {
        (mu3 / (mu2 * mu2.sqrt()), mu4 / (mu2 * mu2))
    } else {
        (0.0, 0.0)
    };

    let entropy = power
        .iter()
        .map(|&p| {
            let q = p / total;
            if q > 0.0 {
                -q * q.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>();
    let flatness = if power.iter().all(|&p| p > 0.0) {
        let log_mean = power.iter().map(|p| p.ln()).sum::<f64>() / m as f64;
        log_mean.exp() / (total / m as f64)
    } else {
        0.0
    };

    let mut rolloff_85 = freqs[m - 1];
    let mut median_frequency = freqs[m - 1];
    let mut cum = 0.0;
    let mut seen_median = false;
    let mut seen_rolloff = false;
    for (f, p) in freqs.iter().zip(&power) {
        cum += p;
        if !seen_median && cum >= 0.5 * total {
            median_frequency = *f;
            seen_median = true;
        }
        if !seen_rolloff && cum >= 0.85 * total {
            rolloff_85 = *f;
            seen_rolloff = true;
        }
    }

    let peak_idx = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let peak_frequency = freqs[peak_idx];
    let peak_magnitude = spectrum.magnitudes[peak_idx];

    let split = config.band_split_hz;
    let low: f64 = freqs
        .iter()
        .zip(&power)
        .filter(|(f, _)| **f <= split)
        .map(|(_, p)| p)
        .sum();
    let high: f64 = freqs
        .iter()
        .zip(&power)
        .filter(|(f, _)| **f >= split)
        .map(|(_, p)| p)
        .sum();
    let er_lowhigh = low / high.max(1e-30);

    let band_energy: f64 = freqs
        .iter()
        .zip(&power)
        .filter(|(f, _)| **f >= config.named_band_low_hz && **f <= config.named_band_high_hz)
        .map(|(_, p)| p)
        .sum();

    let f_max = freqs[m - 1];
    let band_width = f_max / 8.0;
    let mut bands = [0.0f64; 8];
    for (f, p) in freqs.iter().zip(&power) {
        let idx = ((f / band_width).floor() as usize).min(7);
        bands[idx] += p;
    }

    Ok([
        centroid,
        bandwidth,
        skewness,
        kurtosis,
        entropy,
        flatness,
        rolloff_85,
        median_frequency,
        peak_frequency,
        peak_magnitude,
        er_lowhigh,
        band_energy,
        bands[0],
        bands[1],
        bands[2],
        bands[3],
        bands[4],
        bands[5],
        bands[6],
        bands[7],
    ])
}

/// Mean/std aggregation over per-window feature vectors, interleaved as
/// `layer_feature_names()`. Constant columns aggregate to (value, 0) exactly.
pub(crate) fn aggregate_windows(windows: &[[f64; WINDOW_FEATURE_COUNT]]) -> Vec<f64> {
    debug_assert!(windows.len() >= 2);
    let n = windows.len() as f64;
    let mut out = Vec::with_capacity(LAYER_FEATURE_COUNT);
    for j in 0..WINDOW_FEATURE_COUNT {
        let first = windows[0][j];
        if windows.iter().all(|w| w[j] == first) {
            out.push(first);
            out.push(0.0);
            continue;
        }
        let mean = windows.iter().map(|w| w[j]).sum::<f64>() / n;
        let ss = windows.iter().map(|w| (w[j] - mean).powi(2)).sum::<f64>();
        out.push(mean);
        out.push((ss / (n - 1.0)).sqrt());
    }
    out
}

/// Winsorize a trimmed segment, filter it once, window both variants, and
/// aggregate the per-window catalog into layer statistics.
pub fn extract_layer_features(
    recording: &crate::signal::AeRecording,
    segment: &LayerSegmentAE,
    config: &AeFeatureConfig,
) -> Result<AeLayerFeatures> {
    config.validate()?;
    if segment.end_sample > recording.samples.len() || segment.start_sample >= segment.end_sample {
        return Err(Error::InvalidInput(format!(
            "segment [{}, {}) outside recording of {} samples",
            segment.start_sample,
            segment.end_sample,
            recording.samples.len()
        )));
    }
    let slice = &recording.samples[segment.start_sample..segment.end_sample];
    if slice.len() < 2 * WINDOW_LEN {
        return Err(Error::SegmentTooShort {
            layer: segment.layer_index,
            detail: format!("{} samples < {}", slice.len(), 2 * WINDOW_LEN),
        });
    }

    let winsorized = winsorize_mad(slice)?;
    let filter = design_butterworth_highpass(
        config.filter_cutoff_hz,
        config.filter_order,
        recording.sample_rate_hz,
    )?;
    let filtered = apply_iir(&filter, &winsorized)?;

    let n_windows = slice.len() / WINDOW_LEN;
    let raw_windows: Vec<&[f64]> = winsorized.chunks_exact(WINDOW_LEN).collect();
    let filt_windows: Vec<&[f64]> = filtered.chunks_exact(WINDOW_LEN).collect();
    let per_window: Vec<Result<Option<[f64; WINDOW_FEATURE_COUNT]>>> =
        crate::parallel::map_indices(n_windows, |w| {
            match AeWindowFeatures::compute(
                raw_windows[w],
                filt_windows[w],
                recording.sample_rate_hz,
                config,
            ) {
                Ok(feat) => Ok(Some(feat.values)),
                Err(Error::DegenerateWindow(_)) => Ok(None),
                Err(e) => Err(e),
            }
        });

    let mut kept: Vec<[f64; WINDOW_FEATURE_COUNT]> = Vec::with_capacity(n_windows);
    let mut skipped = 0usize;
    for r in per_window {
        match r? {
            Some(v) => kept.push(v),
            None => skipped += 1,
        }
    }
    if kept.len() < 2 {
        return Err(Error::LayerExtraction {
            layer: segment.layer_index,
            detail: format!(
                "{} usable windows out of {n_windows} (need at least 2)",
                kept.len()
            ),
        });
    }

    Ok(AeLayerFeatures {
        layer_index: segment.layer_index,
        values: aggregate_windows(&kept),
        window_count: kept.len(),
        skipped_windows: skipped,
    })
}
