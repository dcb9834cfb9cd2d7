//! Iterative radix-2 FFT and one-sided magnitude spectrum.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::{Error, Result};

/// One-sided magnitude spectrum of a real window.
///
/// `magnitudes[k]` is `|X_k|` for bins 0..=N/2 of the length-N DFT, and
/// `frequencies_hz[k] = k * sample_rate / N`. Power is defined as
/// magnitude squared, with interior bins counted twice when reconstructing
/// total signal energy (the DC and Nyquist bins appear once).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub frequencies_hz: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub window_len: usize,
    pub sample_rate_hz: f64,
}

impl Spectrum {
    /// Bin spacing in Hz.
    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.window_len as f64
    }

    /// Power per bin (`|X_k|^2`), without the one-sided doubling.
    pub fn power(&self) -> Vec<f64> {
        self.magnitudes.iter().map(|m| m * m).collect()
    }

    /// One-sided power with interior bins doubled; sums to `N * sum(x^2)`.
    pub fn one_sided_power(&self) -> Vec<f64> {
        let last = self.magnitudes.len() - 1;
        self.magnitudes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let p = m * m;
                if k == 0 || k == last {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }
}

/// Twiddle factors for the hot window size, shared across threads.
static TWIDDLES_1024: OnceLock<Vec<Complex64>> = OnceLock::new();

fn twiddles_for(n: usize) -> Option<&'static [Complex64]> {
    if n == 1024 {
        Some(TWIDDLES_1024.get_or_init(|| compute_twiddles(1024)))
    } else {
        None
    }
}

/// `w[k] = exp(-2*pi*i*k/n)` for k in 0..n/2.
fn compute_twiddles(n: usize) -> Vec<Complex64> {
    (0..n / 2)
        .map(|k| {
            let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex64::new(angle.cos(), angle.sin())
        })
        .collect()
}

fn bit_reverse_permute(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place iterative radix-2 decimation-in-time FFT. `buf.len()` must be a
/// power of two (checked by callers).
fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    bit_reverse_permute(buf);
    let table = twiddles_for(n);
    let mut len = 2usize;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = match table {
                    Some(t) => t[k * step],
                    None => {
                        let angle =
                            -2.0 * std::f64::consts::PI * (k * step) as f64 / n as f64;
                        Complex64::new(angle.cos(), angle.sin())
                    }
                };
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn require_power_of_two(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "FFT window length must be a nonzero power of two, got {n}"
        )));
    }
    Ok(())
}

/// Full complex DFT of a real window. Length must be a power of two.
pub fn fft_complex(window: &[f64]) -> Result<Vec<Complex64>> {
    require_power_of_two(window.len())?;
    if let Some(i) = window.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite sample at index {i} in FFT input"
        )));
    }
    let mut buf: Vec<Complex64> = window
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    fft_in_place(&mut buf);
    Ok(buf)
}

/// One-sided magnitude spectrum (bins 0..=N/2) of a real window.
pub fn fft(window: &[f64], sample_rate_hz: f64) -> Result<Spectrum> {
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let n = window.len();
    let full = fft_complex(window)?;
    let half = n / 2;
    let magnitudes: Vec<f64> = full[..=half].iter().map(|c| c.norm()).collect();
    let frequencies_hz: Vec<f64> = (0..=half)
        .map(|k| k as f64 * sample_rate_hz / n as f64)
        .collect();
    Ok(Spectrum {
        frequencies_hz,
        magnitudes,
        window_len: n,
        sample_rate_hz,
    })
}
