//! Frame synthesis for the eight digital schemes.
//!
//! Linear schemes (BPSK/QPSK/8PSK/PAM4/QAM16/QAM64) map Gray-coded bit
//! groups onto unit-power constellations, zero-stuff to `sps` samples
//! per symbol, and shape with a unit-energy root-raised-cosine filter.
//! The frequency schemes (GFSK/CPFSK) integrate a frequency pulse into
//! a constant-envelope phase trajectory — Gaussian-smoothed for GFSK,
//! rectangular for CPFSK.
//!
//! Every modulator emits a [`FRAME_LEN`]-sample crop taken from the
//! steady-state region of a longer shaped stream (edge transients never
//! appear in a frame), normalized to unit average power. The crop
//! offset is the only randomness and is derived from the `seed`
//! argument, so identical `(scheme, bits, sps, rolloff, seed)` give a
//! bit-identical frame.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{ComplexSample, IQFrame, Scheme, FRAME_LEN};
use crate::rng::{derived_rng, stream};

/// Samples per symbol used by the stock dataset generator.
pub const DEFAULT_SPS: usize = 8;
/// Root-raised-cosine roll-off used by the stock dataset generator.
pub const DEFAULT_ROLLOFF: f64 = 0.35;
/// RRC filter span, in symbols, on each side combined (total length
/// `RRC_SPAN_SYMBOLS * sps + 1` taps).
pub const RRC_SPAN_SYMBOLS: usize = 8;
/// Gaussian frequency-pulse span for GFSK, in symbols.
pub const GAUSSIAN_SPAN_SYMBOLS: usize = 4;
/// Gaussian bandwidth-time product for GFSK.
pub const GAUSSIAN_BT: f64 = 0.35;
/// Modulation index shared by GFSK and CPFSK.
pub const FSK_MOD_INDEX: f64 = 0.5;

/// Extra symbols generated beyond the minimum so the crop offset has
/// room to move; the seed picks a start inside this slack.
const CROP_MARGIN_SYMBOLS: usize = 4;

// ---------------------------------------------------------------------------
// Gray coding and constellations
// ---------------------------------------------------------------------------

/// Binary-reflected Gray code of `n`.
pub fn gray_code(n: u32) -> u32 {
    n ^ (n >> 1)
}

/// Inverse of [`gray_code`].
pub fn gray_decode(g: u32) -> u32 {
    let mut n = g;
    let mut shift = 1;
    while (g >> shift) != 0 {
        n ^= g >> shift;
        shift += 1;
    }
    n
}

/// Amplitude levels for one Gray-coded pulse-amplitude axis with
/// `bits` bits: the level for bit pattern `p` is `2 * rank - (L - 1)`
/// where `rank` is the position of `p` in Gray-code order. Adjacent
/// levels therefore differ in exactly one bit.
fn gray_axis_level(pattern: u32, bits: u32) -> f64 {
    let levels = 1u32 << bits;
    let rank = gray_decode(pattern);
    debug_assert!(rank < levels);
    (2.0 * rank as f64) - (levels as f64 - 1.0)
}

/// The Gray-mapped point constellation of a linear scheme, indexed by
/// raw bit pattern, normalized to unit average power.
///
/// Fails for GFSK/CPFSK, which have no point constellation.
pub fn constellation(scheme: Scheme) -> Result<Vec<ComplexSample>> {
    let points: Vec<ComplexSample> = match scheme {
        Scheme::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        Scheme::Qpsk => square_qam_points(1),
        Scheme::Psk8 => (0..8)
            .map(|p| {
                let position = gray_decode(p) as f64;
                Complex64::from_polar(1.0, std::f64::consts::TAU * position / 8.0)
            })
            .collect(),
        Scheme::Pam4 => (0..4)
            .map(|p| Complex64::new(gray_axis_level(p, 2), 0.0))
            .collect(),
        Scheme::Qam16 => square_qam_points(2),
        Scheme::Qam64 => square_qam_points(3),
        Scheme::Gfsk | Scheme::Cpfsk => return Err(Error::NoConstellation(scheme)),
    };
    Ok(normalize_constellation(points))
}

/// Square QAM with `bits_per_axis` Gray-coded bits on each axis; the
/// high half of the symbol pattern drives I, the low half drives Q.
fn square_qam_points(bits_per_axis: u32) -> Vec<ComplexSample> {
    let total_bits = 2 * bits_per_axis;
    (0..1u32 << total_bits)
        .map(|pattern| {
            let i_bits = pattern >> bits_per_axis;
            let q_bits = pattern & ((1 << bits_per_axis) - 1);
            Complex64::new(
                gray_axis_level(i_bits, bits_per_axis),
                gray_axis_level(q_bits, bits_per_axis),
            )
        })
        .collect()
}

/// Scales a constellation to unit average power.
fn normalize_constellation(mut points: Vec<ComplexSample>) -> Vec<ComplexSample> {
    let avg_power: f64 =
        points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
    let scale = avg_power.sqrt().recip();
    for p in &mut points {
        *p *= scale;
    }
    points
}

/// Index of the constellation point nearest to `sample`.
pub fn nearest_point(points: &[ComplexSample], sample: ComplexSample) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = (sample - p).norm_sqr();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Pulse shaping filters
// ---------------------------------------------------------------------------

/// Root-raised-cosine taps spanning `span_symbols` symbols at `sps`
/// samples per symbol (length `span_symbols * sps + 1`), normalized to
/// unit energy. Exactly symmetric by construction (the second half
/// mirrors the first).
pub fn rrc_taps(sps: usize, rolloff: f64, span_symbols: usize) -> Result<Vec<f64>> {
    if sps < 2 {
        return Err(Error::InvalidParam(format!(
            "samples per symbol must be >= 2, got {sps}"
        )));
    }
    if !(0.0 < rolloff && rolloff <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "rolloff must be in (0, 1], got {rolloff}"
        )));
    }
    if span_symbols == 0 {
        return Err(Error::InvalidParam("span must be >= 1 symbol".to_string()));
    }
    let len = span_symbols * sps + 1;
    let mid = len / 2;
    let mut taps = vec![0.0; len];
    for i in 0..=mid {
        let t = (mid - i) as f64 / sps as f64; // symbol periods, t >= 0
        let v = rrc_impulse(t, rolloff);
        taps[i] = v;
        taps[len - 1 - i] = v;
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt().recip();
    for h in &mut taps {
        *h *= scale;
    }
    Ok(taps)
}

/// The (unnormalized) RRC impulse response at `t` symbol periods,
/// `t >= 0`, with the two removable singularities handled analytically:
/// `t = 0` and `t = 1/(4 * rolloff)`.
fn rrc_impulse(t: f64, rolloff: f64) -> f64 {
    use std::f64::consts::PI;
    let b = rolloff;
    if t.abs() < 1e-10 {
        return 1.0 - b + 4.0 * b / PI;
    }
    let singular = 1.0 / (4.0 * b);
    if (t - singular).abs() < 1e-10 {
        let arg = PI / (4.0 * b);
        return (b / 2.0_f64.sqrt())
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let numerator = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
    let denominator = PI * t * (1.0 - (4.0 * b * t).powi(2));
    numerator / denominator
}

/// Gaussian frequency-pulse taps for GFSK: a sampled Gaussian with
/// standard deviation set by the bandwidth-time product `bt`, truncated
/// to `span_symbols` symbols and normalized so the taps sum to 1 (each
/// symbol then contributes exactly `pi * FSK_MOD_INDEX` of phase).
pub fn gaussian_taps(sps: usize, bt: f64, span_symbols: usize) -> Result<Vec<f64>> {
    if sps < 2 {
        return Err(Error::InvalidParam(format!(
            "samples per symbol must be >= 2, got {sps}"
        )));
    }
    if !(bt > 0.0 && bt.is_finite()) {
        return Err(Error::InvalidParam(format!("BT must be positive, got {bt}")));
    }
    let len = span_symbols * sps + 1;
    let mid = len / 2;
    // sigma of the Gaussian impulse response in symbol periods:
    // sigma = sqrt(ln 2) / (2 * pi * BT).
    let sigma = (2.0_f64.ln()).sqrt() / (std::f64::consts::TAU * bt);
    let mut taps = vec![0.0; len];
    for i in 0..=mid {
        let t = (mid - i) as f64 / sps as f64;
        let v = (-0.5 * (t / sigma).powi(2)).exp();
        taps[i] = v;
        taps[len - 1 - i] = v;
    }
    let sum: f64 = taps.iter().sum();
    for h in &mut taps {
        *h /= sum;
    }
    Ok(taps)
}

// ---------------------------------------------------------------------------
// Shaping and cropping
// ---------------------------------------------------------------------------

/// Zero-stuffs `symbols` to `sps` samples per symbol and convolves with
/// `taps` (full convolution, output length `n * sps + taps.len() - 1`).
pub fn shape_symbols(symbols: &[ComplexSample], taps: &[f64], sps: usize) -> Vec<ComplexSample> {
    let up_len = symbols.len() * sps;
    let out_len = up_len + taps.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    // Upsampled input is nonzero only at multiples of sps, so convolve
    // symbol-wise instead of materializing the zero-stuffed vector.
    for (k, &sym) in symbols.iter().enumerate() {
        let base = k * sps;
        for (j, &h) in taps.iter().enumerate() {
            out[base + j] += sym * h;
        }
    }
    out
}

/// The sub-range of a full convolution where every tap overlaps real
/// input: `[taps_len - 1, up_len)` — output indices outside it contain
/// edge transients.
fn steady_range(up_len: usize, taps_len: usize) -> (usize, usize) {
    (taps_len - 1, up_len)
}

/// Picks the crop start inside the steady region. `slack` is how many
/// start offsets are available beyond the minimum; the seed picks one.
fn crop_offset(slack: usize, seed: u64) -> usize {
    if slack == 0 {
        0
    } else {
        let mut rng = derived_rng(seed, &[stream::CROP]);
        rng.gen_range(0..=slack)
    }
}

/// Crops `FRAME_LEN` samples starting at `start` and normalizes to unit
/// average power.
fn crop_and_normalize(
    stream_samples: &[ComplexSample],
    start: usize,
    sample_rate: f64,
) -> Result<IQFrame> {
    let crop = stream_samples[start..start + FRAME_LEN].to_vec();
    IQFrame::new(crop, sample_rate)?.normalized_to_unit_power()
}

// ---------------------------------------------------------------------------
// Modulators
// ---------------------------------------------------------------------------

/// Minimum number of bits [`modulate`] needs for one frame of `scheme`
/// at `sps` samples per symbol (includes the crop margin).
pub fn required_bits(scheme: Scheme, sps: usize) -> usize {
    let bps = scheme.bits_per_symbol();
    let shaping_overhead = match scheme {
        Scheme::Gfsk => GAUSSIAN_SPAN_SYMBOLS * sps,
        Scheme::Cpfsk => 0,
        _ => RRC_SPAN_SYMBOLS * sps,
    };
    let min_symbols = (FRAME_LEN + shaping_overhead).div_ceil(sps) + CROP_MARGIN_SYMBOLS;
    min_symbols * bps
}

/// Modulates `bits` into one unit-power frame.
///
/// All provided bits are consumed (the bit count must be a whole number
/// of symbols and at least [`required_bits`]); `seed` only selects the
/// crop offset within the shaped stream's steady-state region.
pub fn modulate(
    scheme: Scheme,
    bits: &[bool],
    sps: usize,
    rolloff: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<IQFrame> {
    let needed = required_bits(scheme, sps);
    if bits.len() < needed {
        return Err(Error::InsufficientBits {
            scheme,
            needed,
            got: bits.len(),
        });
    }
    match scheme {
        Scheme::Gfsk => {
            let taps = gaussian_taps(sps, GAUSSIAN_BT, GAUSSIAN_SPAN_SYMBOLS)?;
            modulate_fsk(scheme, bits, Some(&taps), sps, sample_rate, seed)
        }
        // CPFSK's frequency pulse is the bare rectangular symbol hold,
        // which the NRZ expansion already applies.
        Scheme::Cpfsk => modulate_fsk(scheme, bits, None, sps, sample_rate, seed),
        _ => {
            let taps = rrc_taps(sps, rolloff, RRC_SPAN_SYMBOLS)?;
            modulate_linear(scheme, bits, &taps, sps, sample_rate, seed)
        }
    }
}

/// Linear-scheme path with caller-supplied shaping taps; [`modulate`]
/// passes RRC taps, tests can pass e.g. a rectangular window to probe
/// the shaping-free limit.
pub(crate) fn modulate_linear(
    scheme: Scheme,
    bits: &[bool],
    taps: &[f64],
    sps: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<IQFrame> {
    let symbols = map_bits(scheme, bits)?;
    let shaped = shape_symbols(&symbols, taps, sps);
    let (steady_start, steady_end) = steady_range(symbols.len() * sps, taps.len());
    let steady = steady_end.saturating_sub(steady_start);
    if steady < FRAME_LEN {
        return Err(Error::InsufficientBits {
            scheme,
            needed: required_bits(scheme, sps),
            got: bits.len(),
        });
    }
    let start = steady_start + crop_offset(steady - FRAME_LEN, seed);
    crop_and_normalize(&shaped, start, sample_rate)
}

/// Maps bits onto constellation points, `bits_per_symbol` at a time,
/// most significant bit first.
pub(crate) fn map_bits(scheme: Scheme, bits: &[bool]) -> Result<Vec<ComplexSample>> {
    let bps = scheme.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(Error::RaggedBits {
            scheme,
            bits_per_symbol: bps,
            got: bits.len(),
        });
    }
    let points = constellation(scheme)?;
    Ok(bits
        .chunks(bps)
        .map(|chunk| {
            let mut pattern = 0usize;
            for &bit in chunk {
                pattern = (pattern << 1) | bit as usize;
            }
            points[pattern]
        })
        .collect())
}

/// Continuous-phase frequency modulation: NRZ symbols are optionally
/// smoothed by the frequency-pulse `taps` (GFSK), integrated into a
/// phase trajectory, and emitted as a constant-envelope exponential.
///
/// Each symbol carries a total phase advance of `pi * h` regardless of
/// smoothing: the NRZ hold spans `sps` unit samples, so the per-sample
/// integrator gain is `pi * h / sps`, and a unit-sum smoothing pulse
/// only redistributes that advance across neighbouring samples.
fn modulate_fsk(
    scheme: Scheme,
    bits: &[bool],
    taps: Option<&[f64]>,
    sps: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<IQFrame> {
    // NRZ hold: each +-1 symbol repeated sps times.
    let nrz: Vec<f64> = bits
        .iter()
        .flat_map(|&b| std::iter::repeat(if b { 1.0 } else { -1.0 }).take(sps))
        .collect();
    // Instantaneous-frequency waveform: the held symbols as-is, or their
    // full convolution with the smoothing pulse.
    let (freq, pulse_len) = match taps {
        None => (nrz.clone(), 1),
        Some(taps) => {
            let mut smooth = vec![0.0; nrz.len() + taps.len() - 1];
            for (i, &x) in nrz.iter().enumerate() {
                for (j, &h) in taps.iter().enumerate() {
                    smooth[i + j] += x * h;
                }
            }
            (smooth, taps.len())
        }
    };
    let gain = std::f64::consts::PI * FSK_MOD_INDEX / sps as f64;
    let mut phase = 0.0;
    let wave: Vec<ComplexSample> = freq
        .iter()
        .map(|&f| {
            phase += gain * f;
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    let (steady_start, steady_end) = steady_range(nrz.len(), pulse_len);
    let steady = steady_end.saturating_sub(steady_start);
    if steady < FRAME_LEN {
        return Err(Error::InsufficientBits {
            scheme,
            needed: required_bits(scheme, sps),
            got: bits.len(),
        });
    }
    let start = steady_start + crop_offset(steady - FRAME_LEN, seed);
    crop_and_normalize(&wave, start, sample_rate)
}

// ---------------------------------------------------------------------------
// Matched-filter demodulation (used as the loopback oracle in tests and
// by the inspection tooling)
// ---------------------------------------------------------------------------

/// Runs `stream_samples` through the matched filter `taps` and samples
/// the first `n_symbols` symbol centers. Assumes `stream_samples` is a
/// full convolution of shaped symbols (symbol `k` peaks at index
/// `2 * (taps.len() - 1) ... ` relative to the doubly-filtered stream:
/// concretely at `taps.len() - 1 + k * sps` of this function's output).
pub fn matched_filter_symbols(
    stream_samples: &[ComplexSample],
    taps: &[f64],
    sps: usize,
    n_symbols: usize,
) -> Vec<ComplexSample> {
    let out_len = stream_samples.len() + taps.len() - 1;
    let mut filtered = vec![Complex64::new(0.0, 0.0); out_len];
    for (i, &x) in stream_samples.iter().enumerate() {
        for (j, &h) in taps.iter().enumerate() {
            filtered[i + j] += x * h;
        }
    }
    let delay = taps.len() - 1;
    (0..n_symbols)
        .map(|k| filtered[delay + k * sps])
        .collect()
}

/// Decodes matched-filter symbol samples to bit-pattern indices by
/// nearest constellation point.
pub fn decide_symbols(scheme: Scheme, symbols: &[ComplexSample]) -> Result<Vec<usize>> {
    let points = constellation(scheme)?;
    Ok(symbols.iter().map(|&s| nearest_point(&points, s)).collect())
}
