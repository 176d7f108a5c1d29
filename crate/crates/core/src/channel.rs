//! Receiver-impairment simulation.
//!
//! A generated frame is dragged through four stages, in the order a
//! real front end would impose them on the waveform:
//!
//! 1. [`sro_resample`] — sample-rate offset: the receiver ADC runs at a
//!    slightly wrong rate, modeled as linear-interpolation resampling
//!    along a clamped random-walk rate offset.
//! 2. [`rician_fading`] — multipath: a few fractionally-delayed paths,
//!    each carrying an independent sum-of-sinusoids Rician gain.
//! 3. [`cfo_phase_walk`] — carrier-frequency offset: a per-sample phase
//!    rotation accumulated from a clamped random-walk CFO plus a random
//!    initial phase.
//! 4. [`awgn`] — additive white Gaussian noise calibrated against a
//!    unit-power signal.
//!
//! Every stage records what it actually did in an [`ImpairmentTrace`],
//! which datasets can carry alongside each example. The trace is
//! diagnostic ground truth: training never reads it, but evaluation can
//! (e.g. to feed true offsets into the derotation path).

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ComplexSample, IQFrame, FRAME_LEN};
use crate::rng::{derive_seed, seeded_rng, stream};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Full description of the impairment chain.
///
/// The defaults are the stock receiver profile used by the dataset
/// generator: 200 kHz sample rate, slow CFO/SRO random walks clamped at
/// 500 Hz / 50 Hz, three-path Rician fading (K = 4, 1 Hz max Doppler,
/// 8 sinusoids per path), and SNR-calibrated AWGN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// ADC sample rate in Hz.
    pub sample_rate: f64,
    /// Nominal signal-to-noise ratio in dB (signal at unit power).
    pub snr_db: f64,

    /// Per-sample standard deviation of the CFO random walk, Hz.
    pub cfo_walk_std_hz: f64,
    /// Hard clamp on the CFO magnitude, Hz.
    pub cfo_max_hz: f64,
    /// Per-sample standard deviation of the SRO random walk, Hz.
    pub sro_walk_std_hz: f64,
    /// Hard clamp on the SRO magnitude, Hz.
    pub sro_max_hz: f64,

    /// Number of sinusoids in each path's diffuse (Rayleigh) component.
    pub n_sinusoids: usize,
    /// Maximum Doppler shift, Hz.
    pub max_doppler_hz: f64,
    /// Rician K-factor (LOS power over diffuse power). `0` degenerates
    /// to Rayleigh; `f64::INFINITY` keeps only the unit-magnitude LOS.
    pub k_factor: f64,
    /// Path delays in (possibly fractional) samples.
    pub path_delays: Vec<f64>,
    /// Path magnitudes (same length as `path_delays`).
    pub path_magnitudes: Vec<f64>,
    /// Length cap of the composite fading FIR recorded in traces.
    pub n_taps: usize,

    /// Initial CFO/SRO are drawn uniform on `+- max * this` when not
    /// pinned below.
    pub initial_offset_fraction: f64,

    /// Stage toggles; a disabled stage passes the frame through
    /// bit-identically.
    pub sro_enabled: bool,
    pub fading_enabled: bool,
    pub cfo_enabled: bool,

    /// Pin the initial CFO (Hz) instead of drawing it. Used to build
    /// constant-offset datasets and closed-form tests.
    pub cfo_init_hz: Option<f64>,
    /// Pin the initial SRO (Hz) instead of drawing it.
    pub sro_init_hz: Option<f64>,
    /// Pin the initial carrier phase (rad) instead of drawing it
    /// uniform on `[0, 2*pi)`.
    pub phase_init_rad: Option<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            sample_rate: 200e3,
            snr_db: 10.0,
            cfo_walk_std_hz: 0.01,
            cfo_max_hz: 500.0,
            sro_walk_std_hz: 0.01,
            sro_max_hz: 50.0,
            n_sinusoids: 8,
            max_doppler_hz: 1.0,
            k_factor: 4.0,
            path_delays: vec![0.0, 0.9, 1.7],
            path_magnitudes: vec![1.0, 0.8, 0.3],
            n_taps: 8,
            initial_offset_fraction: 0.1,
            sro_enabled: true,
            fading_enabled: true,
            cfo_enabled: true,
            cfo_init_hz: None,
            sro_init_hz: None,
            phase_init_rad: None,
        }
    }
}

impl ChannelParams {
    /// Checks internal consistency; called by every stage that depends
    /// on the fields it validates.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        for (name, v) in [
            ("cfo_walk_std_hz", self.cfo_walk_std_hz),
            ("cfo_max_hz", self.cfo_max_hz),
            ("sro_walk_std_hz", self.sro_walk_std_hz),
            ("sro_max_hz", self.sro_max_hz),
            ("max_doppler_hz", self.max_doppler_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.sro_max_hz >= self.sample_rate {
            return Err(Error::InvalidParam(
                "sro_max_hz must stay far below the sample rate".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_offset_fraction) {
            return Err(Error::InvalidParam(format!(
                "initial_offset_fraction must be in [0, 1], got {}",
                self.initial_offset_fraction
            )));
        }
        if self.k_factor < 0.0 || self.k_factor.is_nan() {
            return Err(Error::InvalidParam(format!(
                "k_factor must be >= 0, got {}",
                self.k_factor
            )));
        }
        if self.path_delays.len() != self.path_magnitudes.len() || self.path_delays.is_empty() {
            return Err(Error::InvalidParam(format!(
                "path_delays ({}) and path_magnitudes ({}) must be equal-length and non-empty",
                self.path_delays.len(),
                self.path_magnitudes.len()
            )));
        }
        if self.n_sinusoids == 0 {
            return Err(Error::InvalidParam("n_sinusoids must be >= 1".to_string()));
        }
        let mut max_tap = 0usize;
        for &d in &self.path_delays {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "path delay must be finite and >= 0, got {d}"
                )));
            }
            let i0 = d.floor() as usize;
            let frac = d - d.floor();
            max_tap = max_tap.max(if frac > 1e-12 { i0 + 1 } else { i0 });
        }
        if max_tap + 1 > self.n_taps {
            return Err(Error::InvalidParam(format!(
                "path delays need {} taps but n_taps is {}",
                max_tap + 1,
                self.n_taps
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// Ground-truth record of what the chain did to one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpairmentTrace {
    /// CFO trajectory, Hz, one value per sample.
    pub cfo_hz: Vec<f64>,
    /// Cumulative carrier phase applied at each sample, rad.
    pub phase_rad: Vec<f64>,
    /// SRO trajectory, Hz, one value per sample.
    pub sro_hz: Vec<f64>,
    /// Composite fading FIR at the start of the frame, padded to
    /// `n_taps` entries (identity = `[1, 0, 0, ...]`). Snapshot only:
    /// the taps evolve (slowly) within the frame.
    pub fading_taps: Vec<ComplexSample>,
    /// Seed the AWGN stage was given.
    pub noise_seed: u64,
}

impl ImpairmentTrace {
    /// The trace of a chain with every stage disabled.
    pub fn identity(n_taps: usize, noise_seed: u64) -> Self {
        let mut fading_taps = vec![Complex64::new(0.0, 0.0); n_taps];
        if n_taps > 0 {
            fading_taps[0] = Complex64::new(1.0, 0.0);
        }
        ImpairmentTrace {
            cfo_hz: vec![0.0; FRAME_LEN],
            phase_rad: vec![0.0; FRAME_LEN],
            sro_hz: vec![0.0; FRAME_LEN],
            fading_taps,
            noise_seed,
        }
    }
}

/// CFO stage output trace: the walked CFO and the accumulated phase.
#[derive(Clone, Debug, PartialEq)]
pub struct CfoWalk {
    pub cfo_hz: Vec<f64>,
    pub phase_rad: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Shared walk machinery
// ---------------------------------------------------------------------------

/// A clamped Gaussian random walk of length `n`: `f[0]` is the clamped
/// initial value, and each step adds `N(0, std)` before re-clamping to
/// `[-max, +max]`.
fn clamped_walk(rng: &mut ChaCha8Rng, init: f64, std: f64, max: f64, n: usize) -> Vec<f64> {
    let clamp = |v: f64| v.clamp(-max, max);
    let mut walk = Vec::with_capacity(n);
    let mut current = clamp(init);
    walk.push(current);
    for _ in 1..n {
        if std > 0.0 {
            let step: f64 = rng.sample(StandardNormal);
            current = clamp(current + std * step);
        }
        walk.push(current);
    }
    walk
}

/// Draws the initial walk value: uniform on `+- max * fraction`, or 0
/// when that interval is empty.
fn draw_initial(rng: &mut ChaCha8Rng, max: f64, fraction: f64) -> f64 {
    let bound = max * fraction;
    if bound > 0.0 {
        rng.gen_range(-bound..=bound)
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Carrier-frequency-offset phase walk.
///
/// The CFO trajectory `f[n]` starts at `cfo_init_hz` (or a uniform draw
/// on `+- cfo_max_hz * initial_offset_fraction`) and random-walks with
/// per-sample std `cfo_walk_std_hz`, clamped to `+- cfo_max_hz`. The
/// applied phase accumulates *between* samples:
///
/// ```text
/// theta[0] = theta0,   theta[n] = theta[n-1] + 2*pi*f[n]/fs
/// y[n] = x[n] * exp(j*theta[n])
/// ```
///
/// so a constant `f0` with `theta0 = 0` gives exactly
/// `y[n] = x[n] * exp(j*2*pi*f0*n/fs)`.
pub fn cfo_phase_walk(
    frame: &IQFrame,
    params: &ChannelParams,
    seed: u64,
) -> Result<(IQFrame, CfoWalk)> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let init = params
        .cfo_init_hz
        .unwrap_or_else(|| draw_initial(&mut rng, params.cfo_max_hz, params.initial_offset_fraction));
    let theta0 = params
        .phase_init_rad
        .unwrap_or_else(|| rng.gen_range(0.0..std::f64::consts::TAU));
    let cfo_hz = clamped_walk(
        &mut rng,
        init,
        params.cfo_walk_std_hz,
        params.cfo_max_hz,
        FRAME_LEN,
    );
    let omega_scale = std::f64::consts::TAU / params.sample_rate;
    let mut phase_rad = Vec::with_capacity(FRAME_LEN);
    let mut theta = theta0;
    phase_rad.push(theta);
    for &f in cfo_hz.iter().skip(1) {
        theta += omega_scale * f;
        phase_rad.push(theta);
    }
    let out = frame.map_samples(|n, s| s * Complex64::from_polar(1.0, phase_rad[n]));
    Ok((out, CfoWalk { cfo_hz, phase_rad }))
}

/// Sample-rate-offset resampling.
///
/// The rate offset `r[n]` (Hz) follows the same clamped-walk scheme as
/// the CFO. The receiver reads the input at a fractional index that
/// advances by `1 + r[n]/fs` per output sample (strictly increasing
/// since `r` is clamped far below `fs`), with linear interpolation
/// between input samples and zero-order hold past the frame edge. Zero
/// offset passes the frame through bit-identically.
pub fn sro_resample(
    frame: &IQFrame,
    params: &ChannelParams,
    seed: u64,
) -> Result<(IQFrame, Vec<f64>)> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let init = params
        .sro_init_hz
        .unwrap_or_else(|| draw_initial(&mut rng, params.sro_max_hz, params.initial_offset_fraction));
    let sro_hz = clamped_walk(
        &mut rng,
        init,
        params.sro_walk_std_hz,
        params.sro_max_hz,
        FRAME_LEN,
    );
    let x = frame.samples();
    let mut out = Vec::with_capacity(FRAME_LEN);
    let mut t = 0.0_f64;
    for (n, &r) in sro_hz.iter().enumerate() {
        if n > 0 {
            t += 1.0 + r / params.sample_rate;
        }
        let i = t.floor();
        let frac = t - i;
        let i = i as usize;
        let value = if i >= FRAME_LEN - 1 {
            x[FRAME_LEN - 1]
        } else if frac == 0.0 {
            x[i]
        } else {
            x[i] * (1.0 - frac) + x[i + 1] * frac
        };
        out.push(value);
    }
    Ok((IQFrame::from_parts_unchecked(out, frame.sample_rate()), sro_hz))
}

/// One multipath path's gain process: a unit-power Rician fader built
/// from a line-of-sight phasor plus `n_sinusoids` equal-power diffuse
/// sinusoids at random Doppler angles and phases.
struct PathFader {
    los_weight: f64,
    diffuse_weight: f64,
    los_phase: f64,
    /// rad/sample
    los_omega: f64,
    sin_phase: Vec<f64>,
    /// rad/sample
    sin_omega: Vec<f64>,
}

impl PathFader {
    fn draw(rng: &mut ChaCha8Rng, params: &ChannelParams) -> PathFader {
        use std::f64::consts::TAU;
        let omega_of = |rng: &mut ChaCha8Rng| {
            let angle = rng.gen_range(0.0..TAU);
            TAU * params.max_doppler_hz * angle.cos() / params.sample_rate
        };
        let los_omega = omega_of(rng);
        let los_phase = rng.gen_range(0.0..TAU);
        let mut sin_phase = Vec::with_capacity(params.n_sinusoids);
        let mut sin_omega = Vec::with_capacity(params.n_sinusoids);
        for _ in 0..params.n_sinusoids {
            sin_omega.push(omega_of(rng));
            sin_phase.push(rng.gen_range(0.0..TAU));
        }
        let (los_weight, diffuse_weight) = if params.k_factor.is_infinite() {
            (1.0, 0.0)
        } else {
            let k = params.k_factor;
            (
                (k / (k + 1.0)).sqrt(),
                (1.0 / (k + 1.0)).sqrt() / (params.n_sinusoids as f64).sqrt(),
            )
        };
        PathFader {
            los_weight,
            diffuse_weight,
            los_phase,
            los_omega,
            sin_phase,
            sin_omega,
        }
    }

    /// Complex gain at sample `n`; `E[|gain|^2] = 1`.
    fn gain(&self, n: usize) -> Complex64 {
        let t = n as f64;
        let mut g = Complex64::from_polar(self.los_weight, self.los_phase + self.los_omega * t);
        for (phi, om) in self.sin_phase.iter().zip(&self.sin_omega) {
            g += Complex64::from_polar(self.diffuse_weight, phi + om * t);
        }
        g
    }
}

/// Sum-of-sinusoids Rician multipath fading.
///
/// Each configured path applies an independent time-varying complex
/// gain to a fractionally-delayed (linear interpolation) copy of the
/// input; the outputs sum. Returns the faded frame plus the composite
/// FIR taps at the start of the frame, padded to `n_taps`.
pub fn rician_fading(
    frame: &IQFrame,
    params: &ChannelParams,
    seed: u64,
) -> Result<(IQFrame, Vec<ComplexSample>)> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let faders: Vec<PathFader> = (0..params.path_delays.len())
        .map(|_| PathFader::draw(&mut rng, params))
        .collect();

    let x = frame.samples();
    // x at fractional delay d, i.e. x(n - d), zero before frame start.
    let delayed = |n: usize, d: f64| -> Complex64 {
        let i0 = d.floor() as usize;
        let frac = d - d.floor();
        let newer = if n >= i0 { x[n - i0] } else { return Complex64::new(0.0, 0.0) };
        if frac <= 1e-12 {
            newer
        } else {
            let older = if n >= i0 + 1 {
                x[n - i0 - 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
            newer * (1.0 - frac) + older * frac
        }
    };

    let mut out = Vec::with_capacity(FRAME_LEN);
    for n in 0..FRAME_LEN {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, fader) in faders.iter().enumerate() {
            acc += params.path_magnitudes[p] * fader.gain(n) * delayed(n, params.path_delays[p]);
        }
        out.push(acc);
    }

    // Composite FIR snapshot at n = 0: tap j multiplies x[n - j].
    let mut taps = vec![Complex64::new(0.0, 0.0); params.n_taps];
    for (p, fader) in faders.iter().enumerate() {
        let d = params.path_delays[p];
        let i0 = d.floor() as usize;
        let frac = d - d.floor();
        let g = params.path_magnitudes[p] * fader.gain(0);
        if frac <= 1e-12 {
            taps[i0] += g;
        } else {
            taps[i0] += g * (1.0 - frac);
            taps[i0 + 1] += g * frac;
        }
    }

    Ok((IQFrame::from_parts_unchecked(out, frame.sample_rate()), taps))
}

/// Additive white Gaussian noise.
///
/// The noise power is `10^(-snr_db/10)` per complex sample (variance
/// split evenly between I and Q), which makes the measured SNR equal
/// `snr_db` when the input has unit average power. An infinite
/// `snr_db` returns the frame bit-identically.
pub fn awgn(frame: &IQFrame, snr_db: f64, seed: u64) -> IQFrame {
    if snr_db == f64::INFINITY {
        return frame.clone();
    }
    let noise_power = 10.0_f64.powf(-snr_db / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    let mut rng = seeded_rng(seed);
    frame.map_samples(|_, s| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        s + Complex64::new(sigma * re, sigma * im)
    })
}

// ---------------------------------------------------------------------------
// Full chain
// ---------------------------------------------------------------------------

/// Applies the whole impairment chain in its fixed order
/// (SRO -> fading -> CFO -> AWGN) and returns the output frame plus the
/// assembled ground-truth trace.
///
/// Per-stage seeds are derived from `seed`, so one integer pins the
/// whole chain. When fading is enabled the faded signal is
/// re-normalized to unit average power before noise is added — fading
/// randomizes the per-frame gain, and without the re-normalization the
/// AWGN calibration (and therefore `snr_db`) would drift with it. The
/// recorded `fading_taps` snapshot is taken before that scaling.
pub fn apply_channel(
    frame: &IQFrame,
    params: &ChannelParams,
    seed: u64,
) -> Result<(IQFrame, ImpairmentTrace)> {
    params.validate()?;
    let noise_seed = derive_seed(seed, &[stream::NOISE]);
    let mut trace = ImpairmentTrace::identity(params.n_taps, noise_seed);
    let mut current = frame.clone();

    if params.sro_enabled {
        let (resampled, sro_hz) =
            sro_resample(&current, params, derive_seed(seed, &[stream::SRO]))?;
        current = resampled;
        trace.sro_hz = sro_hz;
    }
    if params.fading_enabled {
        let (faded, taps) = rician_fading(&current, params, derive_seed(seed, &[stream::FADING]))?;
        trace.fading_taps = taps;
        current = faded.normalized_to_unit_power()?;
    }
    if params.cfo_enabled {
        let (rotated, walk) = cfo_phase_walk(&current, params, derive_seed(seed, &[stream::CFO]))?;
        current = rotated;
        trace.cfo_hz = walk.cfo_hz;
        trace.phase_rad = walk.phase_rad;
    }
    current = awgn(&current, params.snr_db, noise_seed);
    Ok((current, trace))
}
