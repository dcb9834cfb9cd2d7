//! AE waveform synthesis.
//!
//! A recording alternates active deposition blocks with dwell gaps. Each
//! active block is first-difference-shaped Gaussian noise (about 90% of
//! its energy above 100 kHz) held at a 55 dB RMS level, multiplied by a
//! slowly drifting gain, plus Poisson-timed exponentially decaying tone
//! bursts in the 150-240 kHz band. Dwell gaps are white noise at 20 dB.
//! Every stage draws from its own counter-derived RNG stream, so blocks
//! can be generated in parallel and still match serial output exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::parallel;
use crate::rng::rng_for;

use super::{ConditionSignature, SynthProfile};

/// Active-phase RMS in volts: 55 dB re 1 uV.
pub const ACTIVE_RMS_V: f64 = 5.623413251903491e-4;
/// Dwell-phase RMS in volts: 20 dB re 1 uV.
pub const DWELL_RMS_V: f64 = 1e-5;
/// Spacing of the gain-drift control points.
const MODULATION_STEP_S: f64 = 0.1;
/// Burst envelope e-folding time. Ten samples at 500 kHz: long enough to
/// lift kurtosis through the handful of samples that outlier clamping
/// flattens, short enough that burst count barely moves window energy.
const BURST_DECAY_S: f64 = 2e-5;
/// A burst is evaluated for this many decay constants, then truncated.
const BURST_SPAN_DECAYS: f64 = 5.0;
const BURST_CARRIER_MIN_HZ: f64 = 150e3;
const BURST_CARRIER_MAX_HZ: f64 = 240e3;

/// Generate the full sample vector for one specimen.
pub(super) fn synthesize(
    profile: &SynthProfile,
    signature: &ConditionSignature,
    seed: u64,
) -> Vec<f64> {
    let fs = profile.sample_rate_hz;
    let active_len = (profile.layer_active_s * fs).round() as usize;
    let dwell_len = (profile.dwell_s * fs).round() as usize;
    let n_blocks = 2 * profile.layers - 1;

    // Even blocks are layers, odd blocks the dwell gaps between them.
    let blocks = parallel::map_indices(n_blocks, |b| {
        if b % 2 == 0 {
            active_block(active_len, fs, signature, seed, (b / 2) as u64)
        } else {
            dwell_block(dwell_len, seed, ((b - 1) / 2) as u64)
        }
    });

    let total: usize = blocks.iter().map(Vec::len).sum();
    let mut samples = Vec::with_capacity(total);
    for block in &blocks {
        samples.extend_from_slice(block);
    }
    // Acquisition chains record single precision; quantizing here makes a
    // raw f32 file round trip reproduce the waveform bit for bit.
    for v in &mut samples {
        *v = *v as f32 as f64;
    }
    samples
}

/// Unit-variance noise with a first-difference spectral shape,
/// `4*sin^2(pi*f/fs)` power weighting that concentrates energy high.
fn band_limited_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut white = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        white.push(rng.sample::<f64, _>(StandardNormal));
    }
    (0..n)
        .map(|i| (white[i + 1] - white[i]) / std::f64::consts::SQRT_2)
        .collect()
}

fn active_block(
    n: usize,
    fs: f64,
    signature: &ConditionSignature,
    seed: u64,
    layer: u64,
) -> Vec<f64> {
    let mut noise_rng = rng_for(seed, "ae-noise", &[layer]);
    let mut samples = band_limited_noise(n, &mut noise_rng);

    // Slow gain drift: linear interpolation between Gaussian control
    // points. Spreads window energies without moving the mean level.
    let mut mod_rng = rng_for(seed, "ae-mod", &[layer]);
    let n_ctrl = (n as f64 / fs / MODULATION_STEP_S).ceil() as usize + 1;
    let drift = Normal::new(0.0, signature.slow_modulation_std).expect("validated std");
    let ctrl: Vec<f64> = (0..n_ctrl).map(|_| drift.sample(&mut mod_rng)).collect();
    for (i, v) in samples.iter_mut().enumerate() {
        let pos = i as f64 / fs / MODULATION_STEP_S;
        let j = (pos as usize).min(n_ctrl - 2);
        let gain = 1.0 + ctrl[j] + (ctrl[j + 1] - ctrl[j]) * (pos - j as f64);
        *v *= gain * ACTIVE_RMS_V;
    }

    // Tone bursts: Poisson count, uniform start times, carrier inside the
    // named AE band, amplitude jittered around the signature's scale.
    let mut burst_rng = rng_for(seed, "ae-burst", &[layer]);
    let active_s = n as f64 / fs;
    let burst_len_s = BURST_SPAN_DECAYS * BURST_DECAY_S;
    let lambda = signature.burst_rate_hz * active_s;
    let count = Poisson::new(lambda).expect("validated rate").sample(&mut burst_rng) as usize;
    for _ in 0..count {
        let t0 = burst_rng.gen_range(0.0..active_s - burst_len_s);
        let carrier = burst_rng.gen_range(BURST_CARRIER_MIN_HZ..BURST_CARRIER_MAX_HZ);
        let phase = burst_rng.gen_range(0.0..std::f64::consts::TAU);
        let amp =
            signature.burst_amplitude_scale * ACTIVE_RMS_V * burst_rng.gen_range(0.8..1.2);
        let i0 = (t0 * fs).round() as usize;
        let i1 = (((t0 + burst_len_s) * fs).round() as usize).min(n);
        for i in i0..i1 {
            let dt = (i - i0) as f64 / fs;
            samples[i] += amp
                * (-dt / BURST_DECAY_S).exp()
                * (std::f64::consts::TAU * carrier * dt + phase).sin();
        }
    }
    samples
}

fn dwell_block(n: usize, seed: u64, gap: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, "ae-dwell", &[gap]);
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * DWELL_RMS_V)
        .collect()
}
