//! Coaxial camera frame synthesis.
//!
//! Active frames show a rotated elliptical Gaussian melt-pool blob over a
//! dim sensor background, with occasional single-pixel spatter specks just
//! above the segmentation threshold (morphological opening removes them).
//! Dwell frames are background only. Each frame owns one RNG stream keyed
//! by its index, so frames generate in parallel, bit-identical to serial.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::parallel;
use crate::rng::rng_for;
use crate::vision::Frame;

use super::{ConditionSignature, SynthProfile};

/// Nominal optical resolution of the coaxial camera.
pub const PIXEL_SIZE_UM: f64 = 4.5;

const BACKGROUND_MEAN: f64 = 800.0;
const BACKGROUND_STD: f64 = 60.0;
/// Blob peak over background; far above it so the 0.8-of-max threshold
/// cuts the blob itself, not the background.
const BLOB_PEAK: f64 = 48_000.0;
/// `sqrt(2*ln(1/0.8))`: at this many Gaussian sigmas the blob falls to
/// 80% of its peak, so a signature radius r maps to a thresholded
/// semi-major axis of about r pixels via `sigma = r / MASK_FACTOR`.
const MASK_FACTOR: f64 = 0.6680472308365775;
/// Smallest drawn radius keeps the dimmest blob well above the stream's
/// quiet threshold; the cap keeps foreground under a quarter of the frame.
const RADIUS_MIN_PX: f64 = 8.0;
const RADIUS_MAX_PX: f64 = 30.0;
const ECCENTRICITY_MIN: f64 = 0.05;
const ECCENTRICITY_MAX: f64 = 0.95;
const CENTER_JITTER_STD_PX: f64 = 2.0;
const CENTER_JITTER_MAX_PX: f64 = 4.0;
/// Mean spatter specks per active frame.
const SPATTER_RATE_PER_FRAME: f64 = 1.5;
/// Speck level relative to the nominal frame maximum: above the 0.8
/// threshold, below the blob peak.
const SPATTER_LEVEL_FRACTION: f64 = 0.85;

/// Generate the full frame sequence for one specimen.
pub(super) fn synthesize(
    profile: &SynthProfile,
    signature: &ConditionSignature,
    seed: u64,
) -> Vec<Frame> {
    let n = profile.total_frames();
    let actives: Vec<(f64, f64)> = (0..profile.layers)
        .map(|l| profile.active_interval_s(l))
        .collect();
    parallel::map_indices(n, |j| {
        let t = j as f64 / profile.fps;
        let active = actives.iter().any(|&(a, b)| t >= a && t < b);
        render_frame(j, t, active, profile, signature, seed)
    })
}

fn render_frame(
    index: usize,
    timestamp_s: f64,
    active: bool,
    profile: &SynthProfile,
    signature: &ConditionSignature,
    seed: u64,
) -> Frame {
    let size = profile.frame_size_px;
    let mut rng = rng_for(seed, "frames", &[index as u64]);

    // Blob parameters are drawn before the background so the background
    // draw count never depends on them.
    let blob = active.then(|| {
        let radius_max = RADIUS_MAX_PX.min(size as f64 / 4.0);
        let radius = Normal::new(signature.melt_radius_mean_px, signature.melt_radius_std_px)
            .expect("validated std")
            .sample(&mut rng)
            .clamp(RADIUS_MIN_PX, radius_max);
        let ecc = Normal::new(
            signature.melt_ellipse_eccentricity_mean,
            signature.melt_ellipse_eccentricity_std,
        )
        .expect("validated std")
        .sample(&mut rng)
        .clamp(ECCENTRICITY_MIN, ECCENTRICITY_MAX);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let jitter = Normal::new(0.0, CENTER_JITTER_STD_PX).expect("const std");
        let cx = size as f64 / 2.0
            + jitter
                .sample(&mut rng)
                .clamp(-CENTER_JITTER_MAX_PX, CENTER_JITTER_MAX_PX);
        let cy = size as f64 / 2.0
            + jitter
                .sample(&mut rng)
                .clamp(-CENTER_JITTER_MAX_PX, CENTER_JITTER_MAX_PX);
        (radius, ecc, theta, cx, cy)
    });

    let background = Normal::new(BACKGROUND_MEAN, BACKGROUND_STD).expect("const std");
    let mut intensity: Vec<f64> = (0..size * size)
        .map(|_| background.sample(&mut rng))
        .collect();

    if let Some((radius, ecc, theta, cx, cy)) = blob {
        let sa = radius / MASK_FACTOR;
        let sb = sa * (1.0 - ecc * ecc).sqrt();
        let (sin_t, cos_t) = theta.sin_cos();
        // The Gaussian is negligible beyond four major sigmas.
        let reach = (4.0 * sa).ceil() as isize;
        let x0 = ((cx as isize) - reach).max(0) as usize;
        let x1 = (((cx as isize) + reach + 1).max(0) as usize).min(size);
        let y0 = ((cy as isize) - reach).max(0) as usize;
        let y1 = (((cy as isize) + reach + 1).max(0) as usize).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let u = dx * cos_t + dy * sin_t;
                let v = -dx * sin_t + dy * cos_t;
                let q = (u / sa).powi(2) + (v / sb).powi(2);
                intensity[y * size + x] += BLOB_PEAK * (-q / 2.0).exp();
            }
        }

        let speck = SPATTER_LEVEL_FRACTION * (BACKGROUND_MEAN + BLOB_PEAK);
        let count = Poisson::new(SPATTER_RATE_PER_FRAME)
            .expect("positive rate")
            .sample(&mut rng) as usize;
        for _ in 0..count {
            let x = rng.gen_range(0..size);
            let y = rng.gen_range(0..size);
            let px = &mut intensity[y * size + x];
            *px = px.max(speck);
        }
    }

    let pixels: Vec<u16> = intensity
        .iter()
        .map(|&v| v.round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    Frame {
        width: size,
        height: size,
        pixels,
        timestamp_s,
        pixel_size_um: PIXEL_SIZE_UM,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_signatures;

    #[test]
    fn active_frames_hold_a_bright_centered_blob() {
        let profile = SynthProfile::desk(3);
        let signature = &default_signatures()[1];
        let frame = render_frame(10, 10.0 / 30.0, true, &profile, signature, 77);
        let max = *frame.pixels.iter().max().unwrap() as f64;
        assert!(max > 40_000.0, "peak {max}");
        let argmax = frame
            .pixels
            .iter()
            .enumerate()
            .max_by_key(|(_, &p)| p)
            .unwrap()
            .0;
        let (y, x) = (argmax / 128, argmax % 128);
        assert!((x as isize - 64).unsigned_abs() <= 6, "peak x {x}");
        assert!((y as isize - 64).unsigned_abs() <= 6, "peak y {y}");
    }

    #[test]
    fn dwell_frames_are_background_only() {
        let profile = SynthProfile::desk(3);
        let signature = &default_signatures()[0];
        let frame = render_frame(200, 200.0 / 30.0, false, &profile, signature, 77);
        let mean = frame.mean_intensity();
        assert!((mean - BACKGROUND_MEAN).abs() < 10.0, "mean {mean}");
        assert!((*frame.pixels.iter().max().unwrap() as f64) < 2_000.0);
    }

    #[test]
    fn frames_are_deterministic_per_index() {
        let profile = SynthProfile::desk(3);
        let signature = &default_signatures()[2];
        let a = render_frame(5, 5.0 / 30.0, true, &profile, signature, 11);
        let b = render_frame(5, 5.0 / 30.0, true, &profile, signature, 11);
        assert_eq!(a.pixels, b.pixels);
        let c = render_frame(6, 6.0 / 30.0, true, &profile, signature, 11);
        assert_ne!(a.pixels, c.pixels);
    }
}
