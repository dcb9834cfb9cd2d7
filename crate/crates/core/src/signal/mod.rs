//! Numeric kernels shared by both sensing pipelines: FFT, IIR high-pass
//! design/application, and the AE decibel convention.

mod fft;
mod filter;

pub use fft::{fft, fft_complex, Spectrum};
pub use filter::{apply_iir, design_butterworth_highpass, FilterKind, IirFilter};

use crate::{Error, Result};

/// AE decibel reference: 1 uV, the usual convention for AE sensor chains.
/// Makes the 30 dB quiet threshold equal to a 31.6 uV envelope amplitude.
pub const AE_DB_REFERENCE_VOLTS: f64 = 1e-6;

/// Amplitude floor applied before the log so zero input maps to a finite dB.
pub const AMPLITUDE_FLOOR_VOLTS: f64 = 1e-12;

/// A continuous AE recording with its acquisition metadata.
#[derive(Debug, Clone)]
pub struct AeRecording {
    pub specimen_id: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub start_time_s: f64,
}

impl AeRecording {
    pub fn new(
        specimen_id: impl Into<String>,
        sample_rate_hz: f64,
        samples: Vec<f64>,
        start_time_s: f64,
    ) -> Result<Self> {
        let rec = AeRecording {
            specimen_id: specimen_id.into(),
            sample_rate_hz,
            samples,
            start_time_s,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidInput("recording has no samples".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// Amplitude in dB re `reference_volts`: `20*log10(max(|v|, floor)/ref)`.
pub fn amplitude_db(volts: f64, reference_volts: f64) -> f64 {
    debug_assert!(reference_volts > 0.0);
    let v = volts.abs().max(AMPLITUDE_FLOOR_VOLTS);
    20.0 * (v / reference_volts).log10()
}
