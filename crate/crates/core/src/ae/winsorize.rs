//! MAD-based Winsorization of layer segments.

use crate::{Error, Result};

/// Consistency factor making 1.4826*MAD estimate sigma for Gaussian data.
pub const MAD_SIGMA_FACTOR: f64 = 1.4826;

/// Median via O(n) selection; scratch buffer is consumed.
pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    debug_assert!(!v.is_empty());
    let n = v.len();
    let mid = n / 2;
    let (left, kth, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *kth;
    if n % 2 == 1 {
        hi
    } else {
        let lo = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    }
}

/// Clamp every sample to `median +- 3 * 1.4826 * MAD`.
///
/// A zero MAD (majority-constant signal) disables clamping entirely; the
/// input is returned unchanged rather than collapsed to the median.
pub fn winsorize_mad(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "winsorization needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite sample at index {i}"
        )));
    }
    let mut scratch = samples.to_vec();
    let median = median_in_place(&mut scratch);
    for (d, &x) in scratch.iter_mut().zip(samples.iter()) {
        *d = (x - median).abs();
    }
    let mad = median_in_place(&mut scratch);
    if mad == 0.0 {
        return Ok(samples.to_vec());
    }
    let half_width = 3.0 * MAD_SIGMA_FACTOR * mad;
    let lo = median - half_width;
    let hi = median + half_width;
    Ok(samples.iter().map(|&x| x.clamp(lo, hi)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_clamped_to_upper_bound() {
        let x = [-1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 100.0];
        // median 0, deviations [1,0,1,0,1,1,100] -> MAD 1
        let y = winsorize_mad(&x).unwrap();
        let bound = 3.0 * MAD_SIGMA_FACTOR;
        assert!((y[6] - bound).abs() < 1e-12);
        assert_eq!(&y[..6], &x[..6]);
    }

    #[test]
    fn zero_mad_passes_through() {
        let x = [0.0, 0.0, 0.0, 0.0, 100.0];
        let y = winsorize_mad(&x).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn in_band_samples_unchanged() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let y = winsorize_mad(&x).unwrap();
        // Deviations here are well inside 3 * 1.4826 * MAD.
        assert_eq!(y, x);
    }

    #[test]
    fn outputs_respect_input_bounds() {
        let mut state = 99u64;
        let x: Vec<f64> = (0..5001)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let u = (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0;
                u * u * u * 50.0
            })
            .collect();
        let mut scratch = x.clone();
        let median = median_in_place(&mut scratch);
        for (d, &v) in scratch.iter_mut().zip(x.iter()) {
            *d = (v - median).abs();
        }
        let mad = median_in_place(&mut scratch);
        let y = winsorize_mad(&x).unwrap();
        for &v in &y {
            assert!((v - median).abs() <= 3.0 * MAD_SIGMA_FACTOR * mad + 1e-12);
        }
    }

    #[test]
    fn rejects_tiny_input() {
        assert!(winsorize_mad(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        let mut v = [3.0, 1.0, 2.0];
        assert_eq!(median_in_place(&mut v), 2.0);
        let mut v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median_in_place(&mut v), 2.5);
    }
}
