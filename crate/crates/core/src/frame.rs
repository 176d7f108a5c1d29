//! Core sample, frame, and label types shared across the workbench.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex baseband sample (I + jQ).
pub type ComplexSample = Complex64;

/// Number of complex samples in every frame the workbench handles.
pub const FRAME_LEN: usize = 128;

// ---------------------------------------------------------------------------
// Modulation schemes
// ---------------------------------------------------------------------------

/// The eight digital modulation schemes the workbench generates and
/// classifies. The declaration order fixes the label indices used in
/// datasets, confusion matrices, and exported reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Bpsk,
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    Pam4,
    Qam16,
    Qam64,
    Gfsk,
    Cpfsk,
}

impl Scheme {
    /// All schemes in label-index order.
    pub const ALL: [Scheme; 8] = [
        Scheme::Bpsk,
        Scheme::Qpsk,
        Scheme::Psk8,
        Scheme::Pam4,
        Scheme::Qam16,
        Scheme::Qam64,
        Scheme::Gfsk,
        Scheme::Cpfsk,
    ];

    /// Label index in `[0, 7]`.
    pub fn index(self) -> usize {
        Scheme::ALL.iter().position(|&s| s == self).unwrap()
    }

    /// Inverse of [`Scheme::index`].
    pub fn from_index(index: usize) -> Result<Scheme> {
        Scheme::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::InvalidParam(format!("scheme index {index} out of range 0..8")))
    }

    /// Conventional display name (`"QAM16"`, `"8PSK"`, ...).
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bpsk => "BPSK",
            Scheme::Qpsk => "QPSK",
            Scheme::Psk8 => "8PSK",
            Scheme::Pam4 => "PAM4",
            Scheme::Qam16 => "QAM16",
            Scheme::Qam64 => "QAM64",
            Scheme::Gfsk => "GFSK",
            Scheme::Cpfsk => "CPFSK",
        }
    }

    /// Parses a display name (case-insensitive).
    pub fn from_name(name: &str) -> Result<Scheme> {
        let upper = name.to_ascii_uppercase();
        Scheme::ALL
            .iter()
            .copied()
            .find(|s| s.name() == upper)
            .ok_or_else(|| Error::InvalidParam(format!("unknown scheme {name:?}")))
    }

    /// Bits consumed per transmitted symbol.
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Scheme::Bpsk => 1,
            Scheme::Qpsk => 2,
            Scheme::Psk8 => 3,
            Scheme::Pam4 => 2,
            Scheme::Qam16 => 4,
            Scheme::Qam64 => 6,
            Scheme::Gfsk | Scheme::Cpfsk => 1,
        }
    }

    /// True for schemes that map bits onto a point constellation and are
    /// pulse-shaped linearly; false for the frequency-shift schemes.
    pub fn is_linear(self) -> bool {
        !matches!(self, Scheme::Gfsk | Scheme::Cpfsk)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// IQ frames
// ---------------------------------------------------------------------------

/// A fixed-length complex baseband frame plus the sample rate it was
/// generated at. The length invariant (`FRAME_LEN` samples, all finite)
/// is enforced at construction so downstream code can index freely.
#[derive(Clone, Debug, PartialEq)]
pub struct IQFrame {
    samples: Vec<ComplexSample>,
    sample_rate: f64,
}

impl IQFrame {
    /// Wraps `samples` as a frame.
    ///
    /// Fails unless there are exactly [`FRAME_LEN`] samples, all finite,
    /// and `sample_rate` is positive.
    pub fn new(samples: Vec<ComplexSample>, sample_rate: f64) -> Result<Self> {
        if samples.len() != FRAME_LEN {
            return Err(Error::InvalidParam(format!(
                "frame needs exactly {FRAME_LEN} samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if let Some(bad) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "sample {bad} is not finite: {}",
                samples[bad]
            )));
        }
        Ok(IQFrame { samples, sample_rate })
    }

    pub fn samples(&self) -> &[ComplexSample] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Mean of `|x[n]|^2` over the frame.
    pub fn average_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / FRAME_LEN as f64
    }

    /// Returns the frame scaled to unit average power.
    ///
    /// Fails on an all-zero frame (no finite scale exists).
    pub fn normalized_to_unit_power(mut self) -> Result<Self> {
        let power = self.average_power();
        if power <= 0.0 {
            return Err(Error::InvalidParam(
                "cannot normalize an all-zero frame".to_string(),
            ));
        }
        let scale = power.sqrt().recip();
        for s in &mut self.samples {
            *s *= scale;
        }
        Ok(self)
    }

    /// Writes the frame as `[I[0..128] | Q[0..128]]` into `out`
    /// (`2 * FRAME_LEN` values) — the layout the offset-estimator
    /// network consumes.
    ///
    /// # Panics
    /// If `out` is not exactly `2 * FRAME_LEN` long.
    pub fn write_iq_concat(&self, out: &mut [f64]) {
        assert_eq!(out.len(), 2 * FRAME_LEN, "iq concat buffer length");
        for (n, s) in self.samples.iter().enumerate() {
            out[n] = s.re;
            out[FRAME_LEN + n] = s.im;
        }
    }

    /// Convenience allocation of [`IQFrame::write_iq_concat`].
    pub fn iq_concat(&self) -> Vec<f64> {
        let mut out = vec![0.0; 2 * FRAME_LEN];
        self.write_iq_concat(&mut out);
        out
    }

    /// Applies `f` to every sample, producing a new frame with the same
    /// sample rate. Internal helper for the channel stages.
    pub(crate) fn map_samples(&self, mut f: impl FnMut(usize, ComplexSample) -> ComplexSample) -> IQFrame {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(n, &s)| f(n, s))
            .collect();
        IQFrame {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Builds a frame from already-validated parts without re-checking
    /// finiteness; used by channel stages whose outputs are finite by
    /// construction.
    pub(crate) fn from_parts_unchecked(samples: Vec<ComplexSample>, sample_rate: f64) -> IQFrame {
        debug_assert_eq!(samples.len(), FRAME_LEN);
        IQFrame { samples, sample_rate }
    }
}
