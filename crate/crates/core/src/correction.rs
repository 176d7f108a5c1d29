//! Learnable distortion correction: a small fully-connected network
//! estimates K frequency/phase offset pairs from a raw frame, and a
//! static derotation emits the K corrected copies alongside the raw
//! passthrough. The whole block is differentiable, so a classifier
//! stacked on top trains the estimator end-to-end from class labels
//! alone — no offset supervision anywhere.
//!
//! Layout conventions: frames enter and leave as `[I | Q]` flat
//! concatenations (all in-phase samples, then all quadrature samples);
//! the module output is channel-major `[2(K+1) × len]` where channel
//! `2k` is the I row and `2k+1` the Q row of copy `k`, with `k = 0` the
//! untouched input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::IQFrame;
use crate::nn::{Activation, Dense, ParamSet};

/// Hidden width of the offset-estimator network.
pub const ESTIMATOR_HIDDEN: usize = 80;

// ---------------------------------------------------------------------------
// Ablation modes

/// Which parts of the estimated correction are applied. `None`
/// bypasses the module entirely (the plain-classifier baseline: raw
/// 2-channel output, no estimator parameters at all); the other modes
/// mask the estimate so accuracy gains can be attributed to the
/// frequency term, the phase term, or their combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    FreqOnly,
    PhaseOnly,
    Both,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::FreqOnly,
        Ablation::PhaseOnly,
        Ablation::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::FreqOnly => "freq_only",
            Ablation::PhaseOnly => "phase_only",
            Ablation::Both => "both",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::InvalidParam(format!("unknown ablation mode {name:?}")))
    }

    /// Does this mode carry a learnable correction at all?
    pub fn uses_estimator(self) -> bool {
        !matches!(self, Ablation::None)
    }

    /// (ω multiplier, φ multiplier) applied to the raw estimates; the
    /// same mask zeroes the corresponding estimator output gradients.
    fn mask(self) -> (f64, f64) {
        match self {
            Ablation::None => (0.0, 0.0),
            Ablation::FreqOnly => (1.0, 0.0),
            Ablation::PhaseOnly => (0.0, 1.0),
            Ablation::Both => (1.0, 1.0),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Derotation

/// Multiplies each sample by `e^{−j(ωn + φ)}`, `n` counted from the
/// frame's first sample. Magnitude-preserving; exactly inverted by
/// `derotate(·, −ω, −φ)`.
pub fn derotate(frame: &IQFrame, omega: f64, phi: f64) -> IQFrame {
    frame.map_samples(|n, s| {
        let (sin, cos) = (omega * n as f64 + phi).sin_cos();
        let (i, q) = rotate(s.re, s.im, cos, sin);
        crate::frame::ComplexSample::new(i, q)
    })
}

/// Applies the unit phasor `e^{−jα}` (given as cos α, sin α) to one
/// (I, Q) pair.
#[inline]
fn rotate(i: f64, q: f64, cos: f64, sin: f64) -> (f64, f64) {
    (i * cos + q * sin, q * cos - i * sin)
}

// ---------------------------------------------------------------------------
// Offset estimator

/// Two-layer estimator: `2·len → 80 (relu) → 2K (linear)`, reading the
/// `[I | Q]` concatenation and emitting `[(ω₁, φ₁), …, (ω_K, φ_K)]` in
/// radians/sample and radians. The output layer starts at exactly
/// zero, so an untrained module applies the identity correction.
#[derive(Debug, Clone)]
pub struct OffsetEstimator {
    pub hidden: Dense,
    pub out: Dense,
    frame_len: usize,
    k: usize,
}

impl OffsetEstimator {
    pub fn new(frame_len: usize, k: usize, rng: &mut impl rand::Rng) -> Self {
        assert!(k >= 1, "estimator needs at least one offset pair");
        assert!(frame_len >= 1, "estimator needs a nonempty frame");
        let mut out = Dense::new(ESTIMATOR_HIDDEN, 2 * k, Activation::Linear, rng);
        out.zero_parameters();
        Self {
            hidden: Dense::new(2 * frame_len, ESTIMATOR_HIDDEN, Activation::Relu, rng),
            out,
            frame_len,
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Raw (ω, φ) estimates for one `[I | Q]` input.
    pub fn estimate(&mut self, iq: &[f64]) -> Vec<(f64, f64)> {
        assert_eq!(iq.len(), 2 * self.frame_len, "estimator input length");
        let hid = self.hidden.forward(iq).to_vec();
        let raw = self.out.forward(&hid);
        raw.chunks_exact(2).map(|p| (p[0], p[1])).collect()
    }

    /// Backpropagates gradients on the 2K outputs; accumulates layer
    /// gradients and returns the gradient w.r.t. the `[I | Q]` input.
    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        let grad_hidden = self.out.backward(grad_out);
        self.hidden.backward(&grad_hidden)
    }
}

impl ParamSet for OffsetEstimator {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        self.hidden
            .visit(&mut |name, d, g| f(&format!("hidden.{name}"), d, g));
        self.out.visit(&mut |name, d, g| f(&format!("out.{name}"), d, g));
    }
}

// ---------------------------------------------------------------------------
// Correction module

/// Estimator plus derotation with forward caching for backprop.
///
/// `forward` consumes `[I | Q]` (length `2·len`) and yields the
/// channel-major corrected stack; `backward` consumes the upstream
/// gradient on that stack, accumulates estimator parameter gradients,
/// and returns the gradient w.r.t. the input frame (identity path from
/// the `k = 0` copy, rotation path from the corrected copies, and the
/// estimator's own dependence on the input).
#[derive(Debug, Clone)]
pub struct CorrectionModule {
    pub estimator: Option<OffsetEstimator>,
    ablation: Ablation,
    frame_len: usize,
    input: Vec<f64>,
    applied: Vec<(f64, f64)>,
    output: Vec<f64>,
}

impl CorrectionModule {
    pub fn new(frame_len: usize, k: usize, ablation: Ablation, rng: &mut impl rand::Rng) -> Self {
        let estimator = ablation
            .uses_estimator()
            .then(|| OffsetEstimator::new(frame_len, k, rng));
        Self {
            estimator,
            ablation,
            frame_len,
            input: Vec::new(),
            applied: Vec::new(),
            output: Vec::new(),
        }
    }

    /// Wraps an already-built estimator (deserialized from a bundle).
    pub fn from_estimator(estimator: OffsetEstimator, ablation: Ablation) -> Self {
        assert!(
            ablation.uses_estimator(),
            "bypass mode carries no estimator"
        );
        let frame_len = estimator.frame_len();
        Self {
            estimator: Some(estimator),
            ablation,
            frame_len,
            input: Vec::new(),
            applied: Vec::new(),
            output: Vec::new(),
        }
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Output channel count: 2 in bypass mode, 2(K+1) otherwise.
    pub fn out_channels(&self) -> usize {
        match &self.estimator {
            None => 2,
            Some(est) => 2 * (est.k() + 1),
        }
    }

    /// The masked (ω, φ) pairs applied on the most recent forward pass
    /// — the quantities the correction histograms aggregate.
    pub fn applied_offsets(&self) -> &[(f64, f64)] {
        &self.applied
    }

    pub fn forward(&mut self, iq: &[f64]) -> &[f64] {
        let n = self.frame_len;
        assert_eq!(iq.len(), 2 * n, "correction input length");
        self.input.clear();
        self.input.extend_from_slice(iq);
        self.output.clear();
        // k = 0: the [I | Q] layout doubles as channels (0, 1).
        self.output.extend_from_slice(iq);
        self.applied.clear();
        let Some(estimator) = &mut self.estimator else {
            return &self.output;
        };
        let (mask_w, mask_p) = self.ablation.mask();
        for (omega, phi) in estimator.estimate(iq) {
            self.applied.push((omega * mask_w, phi * mask_p));
        }
        for &(omega, phi) in &self.applied {
            let base = self.output.len();
            self.output.resize(base + 2 * n, 0.0);
            for i in 0..n {
                let (sin, cos) = (omega * i as f64 + phi).sin_cos();
                let (yi, yq) = rotate(iq[i], iq[n + i], cos, sin);
                self.output[base + i] = yi;
                self.output[base + n + i] = yq;
            }
        }
        &self.output
    }

    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        let n = self.frame_len;
        assert_eq!(
            grad_out.len(),
            self.out_channels() * n,
            "correction gradient length"
        );
        assert_eq!(self.input.len(), 2 * n, "backward before forward");
        // Identity path through the k = 0 passthrough.
        let mut grad_in = grad_out[..2 * n].to_vec();
        let Some(estimator) = &mut self.estimator else {
            return grad_in;
        };
        let (mask_w, mask_p) = self.ablation.mask();
        let mut grad_est = vec![0.0; 2 * self.applied.len()];
        for (k, &(omega, phi)) in self.applied.iter().enumerate() {
            let gi_row = &grad_out[(2 * k + 2) * n..][..n];
            let gq_row = &grad_out[(2 * k + 3) * n..][..n];
            let yi_row = &self.output[(2 * k + 2) * n..][..n];
            let yq_row = &self.output[(2 * k + 3) * n..][..n];
            let mut d_omega = 0.0;
            let mut d_phi = 0.0;
            for i in 0..n {
                let (sin, cos) = (omega * i as f64 + phi).sin_cos();
                let (gi, gq) = (gi_row[i], gq_row[i]);
                // Transpose of the rotation: the adjoint of multiplying
                // by e^{−jα} is multiplying by e^{+jα}.
                grad_in[i] += gi * cos - gq * sin;
                grad_in[n + i] += gi * sin + gq * cos;
                // ∂Y_I/∂α = Y_Q and ∂Y_Q/∂α = −Y_I for Y = x·e^{−jα}.
                let d_alpha = gi * yq_row[i] - gq * yi_row[i];
                d_omega += i as f64 * d_alpha;
                d_phi += d_alpha;
            }
            grad_est[2 * k] = d_omega * mask_w;
            grad_est[2 * k + 1] = d_phi * mask_p;
        }
        // The estimator reads the same frame, so its input gradient
        // joins the identity and rotation paths.
        let grad_from_estimator = estimator.backward(&grad_est);
        for (g, d) in grad_in.iter_mut().zip(&grad_from_estimator) {
            *g += d;
        }
        grad_in
    }
}

impl ParamSet for CorrectionModule {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        if let Some(estimator) = &mut self.estimator {
            estimator.visit(&mut |name, d, g| f(&format!("fcn.{name}"), d, g));
        }
    }
}

// ---------------------------------------------------------------------------
