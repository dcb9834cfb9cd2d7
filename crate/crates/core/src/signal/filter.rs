//! Butterworth high-pass design (analog prototype + bilinear transform) and
//! causal IIR application.

use num_complex::Complex64;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Highpass,
}

/// Digital IIR filter in transfer-function form, `a[0] = 1`.
#[derive(Debug, Clone)]
pub struct IirFilter {
    pub feedforward_coeffs: Vec<f64>,
    pub feedback_coeffs: Vec<f64>,
    pub order: usize,
    pub cutoff_hz: f64,
    pub kind: FilterKind,
    max_pole_radius: f64,
}

impl IirFilter {
    /// Largest digital pole magnitude; < 1 for every designed filter.
    pub fn max_pole_radius(&self) -> f64 {
        self.max_pole_radius
    }

    /// `|H(e^{j 2 pi f / fs})|` evaluated from the coefficients.
    pub fn magnitude_response(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        let z_inv = Complex64::new(omega.cos(), -omega.sin());
        let eval = |coeffs: &[f64]| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &c in coeffs.iter().rev() {
                acc = acc * z_inv + c;
            }
            acc
        };
        let num = eval(&self.feedforward_coeffs);
        let den = eval(&self.feedback_coeffs);
        (num / den).norm()
    }
}

/// Expand a polynomial from its roots: returns coefficients of
/// `prod (x - r_i)`, highest degree first, with leading coefficient 1.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        coeffs.push(Complex64::new(0.0, 0.0));
        for i in (1..coeffs.len()).rev() {
            let prev = coeffs[i - 1];
            coeffs[i] = coeffs[i] - r * prev;
        }
    }
    coeffs
}

/// Butterworth high-pass via the analog prototype, a lowpass-to-highpass
/// substitution at the pre-warped cutoff, and the bilinear transform.
pub fn design_butterworth_highpass(
    cutoff_hz: f64,
    order: usize,
    sample_rate_hz: f64,
) -> Result<IirFilter> {
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sample rate must be positive and finite, got {sample_rate_hz}"
        )));
    }
    if !(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0 {
        return Err(Error::InvalidInput(format!(
            "cutoff must lie in (0, Nyquist) = (0, {}), got {cutoff_hz}",
            sample_rate_hz / 2.0
        )));
    }
    if !(1..=8).contains(&order) {
        return Err(Error::InvalidInput(format!(
            "filter order must be in 1..=8, got {order}"
        )));
    }

    // Analog lowpass prototype: poles on the unit circle, left half-plane.
    let n = order;
    let proto_poles: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    // Pre-warp so the bilinear transform lands the cutoff exactly.
    let warped = 2.0 * sample_rate_hz * (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();

    // Lowpass -> highpass: s -> warped/s. Poles invert and scale; n zeros
    // appear at the origin. Prototype gain is 1 and the pole product for a
    // Butterworth is 1, so the analog gain stays 1; computed generically.
    let hp_poles: Vec<Complex64> = proto_poles.iter().map(|&p| warped / p).collect();
    let hp_zeros: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
    let pole_prod: Complex64 = proto_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &p| acc * (-p));
    let k_analog = (Complex64::new(1.0, 0.0) / pole_prod).re;

    // Bilinear transform: s = 2*fs*(z-1)/(z+1).
    let fs2 = 2.0 * sample_rate_hz;
    let map = |s: Complex64| (fs2 + s) / (fs2 - s);
    let z_zeros: Vec<Complex64> = hp_zeros.iter().map(|&z| map(z)).collect();
    let z_poles: Vec<Complex64> = hp_poles.iter().map(|&p| map(p)).collect();
    let num_adj: Complex64 = hp_zeros
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &z| acc * (fs2 - z));
    let den_adj: Complex64 = hp_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &p| acc * (fs2 - p));
    let k_digital = k_analog * (num_adj / den_adj).re;

    let max_pole_radius = z_poles.iter().map(|p| p.norm()).fold(0.0f64, f64::max);
    debug_assert!(max_pole_radius < 1.0);

    let b: Vec<f64> = poly_from_roots(&z_zeros)
        .iter()
        .map(|c| k_digital * c.re)
        .collect();
    let a: Vec<f64> = poly_from_roots(&z_poles).iter().map(|c| c.re).collect();
    debug_assert!((a[0] - 1.0).abs() < 1e-12);

    Ok(IirFilter {
        feedforward_coeffs: b,
        feedback_coeffs: a,
        order,
        cutoff_hz,
        kind: FilterKind::Highpass,
        max_pole_radius,
    })
}

/// Single causal pass, direct form II transposed, zero initial state.
pub fn apply_iir(filter: &IirFilter, samples: &[f64]) -> Result<Vec<f64>> {
    let b = &filter.feedforward_coeffs;
    let a = &filter.feedback_coeffs;
    let order = filter.order;
    debug_assert_eq!(b.len(), order + 1);
    debug_assert_eq!(a.len(), order + 1);

    let mut state = vec![0.0f64; order];
    let mut out = Vec::with_capacity(samples.len());
    for (i, &x) in samples.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at index {i} in filter input"
            )));
        }
        let y = b[0] * x + state.first().copied().unwrap_or(0.0);
        for j in 0..order {
            let carry = if j + 1 < order { state[j + 1] } else { 0.0 };
            state[j] = b[j + 1] * x + carry - a[j + 1] * y;
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_db(filter: &IirFilter, f: f64, fs: f64) -> f64 {
        20.0 * filter.magnitude_response(f, fs).log10()
    }

    #[test]
    fn cutoff_gain_is_half_power() {
        for order in 1..=8 {
            for &fc in &[50_000.0, 150_000.0, 200_000.0] {
                let filt = design_butterworth_highpass(fc, order, 500_000.0).unwrap();
                let g = filt.magnitude_response(fc, 500_000.0);
                assert!(
                    (g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9,
                    "order {order} fc {fc}: {g}"
                );
                assert!(filt.max_pole_radius() < 1.0);
            }
        }
    }

    #[test]
    fn reference_design_gains() {
        let filt = design_butterworth_highpass(150_000.0, 4, 500_000.0).unwrap();
        let g150 = gain_db(&filt, 150_000.0, 500_000.0);
        assert!((g150 - (-3.01)).abs() < 0.1, "{g150}");
        assert!(gain_db(&filt, 75_000.0, 500_000.0) <= -20.0);
        assert!(gain_db(&filt, 245_000.0, 500_000.0) >= -0.5);
    }

    #[test]
    fn magnitude_monotone_for_highpass() {
        for order in 1..=8 {
            let filt = design_butterworth_highpass(150_000.0, order, 500_000.0).unwrap();
            let mut prev = -1.0;
            for k in 0..=250 {
                let m = filt.magnitude_response(k as f64 * 1000.0, 500_000.0);
                assert!(m >= prev - 1e-9, "order {order} at {k} kHz: {m} < {prev}");
                prev = m;
            }
        }
    }

    #[test]
    fn dc_is_killed() {
        let filt = design_butterworth_highpass(150_000.0, 4, 500_000.0).unwrap();
        let x = vec![1.0; 2000];
        let y = apply_iir(&filt, &x).unwrap();
        let tail = &y[1000..];
        assert!(tail.iter().all(|v| v.abs() < 1e-6), "{}", tail[0]);
    }

    #[test]
    fn impulse_matches_direct_recurrence() {
        let filt = design_butterworth_highpass(150_000.0, 4, 500_000.0).unwrap();
        let mut x = vec![0.0; 64];
        x[0] = 1.0;
        let y = apply_iir(&filt, &x).unwrap();
        let b = &filt.feedforward_coeffs;
        let a = &filt.feedback_coeffs;
        let mut direct = vec![0.0f64; x.len()];
        for n in 0..x.len() {
            let mut acc = 0.0;
            for (k, &bk) in b.iter().enumerate() {
                if n >= k {
                    acc += bk * x[n - k];
                }
            }
            for (k, &ak) in a.iter().enumerate().skip(1) {
                if n >= k {
                    acc -= ak * direct[n - k];
                }
            }
            direct[n] = acc;
        }
        for (i, (&got, &want)) in y.iter().zip(direct.iter()).enumerate() {
            assert!((got - want).abs() < 1e-13, "sample {i}: {got} vs {want}");
        }
    }

    #[test]
    fn tone_matches_analytic_response() {
        let fs = 500_000.0;
        let filt = design_butterworth_highpass(150_000.0, 4, fs).unwrap();
        let f0 = 230_000.0;
        let x: Vec<f64> = (0..6000)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let y = apply_iir(&filt, &x).unwrap();
        let tail = &y[5000..];
        let rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
        let measured = rms * std::f64::consts::SQRT_2;
        let expected = filt.magnitude_response(f0, fs);
        let err_db = (20.0 * (measured / expected).log10()).abs();
        assert!(err_db < 0.5, "measured {measured} expected {expected}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(design_butterworth_highpass(250_000.0, 4, 500_000.0).is_err());
        assert!(design_butterworth_highpass(300_000.0, 4, 500_000.0).is_err());
        assert!(design_butterworth_highpass(0.0, 4, 500_000.0).is_err());
        assert!(design_butterworth_highpass(150_000.0, 0, 500_000.0).is_err());
        assert!(design_butterworth_highpass(150_000.0, 9, 500_000.0).is_err());
    }

    #[test]
    fn rejects_non_finite_input() {
        let filt = design_butterworth_highpass(150_000.0, 4, 500_000.0).unwrap();
        assert!(apply_iir(&filt, &[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn output_length_matches_input() {
        let filt = design_butterworth_highpass(150_000.0, 2, 500_000.0).unwrap();
        assert_eq!(apply_iir(&filt, &[1.0; 17]).unwrap().len(), 17);
        assert_eq!(apply_iir(&filt, &[]).unwrap().len(), 0);
    }
}
