//! Layer primitives: dense, valid-mode 1-D convolution, pair
//! max-pooling, and the softmax / cross-entropy pair used at the
//! network head.
//!
//! Convolution inputs and outputs are channel-major flat slices:
//! channel `c` occupies `c*t .. (c+1)*t`. Backward passes accumulate
//! into the layer's gradient buffers and return the gradient with
//! respect to the layer input, so layers chain mechanically.

use rand::Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// Parameter visitation

/// Anything holding learnable parameters. `visit` must walk the same
/// tensors in the same order on every call — the optimizer state and
/// the model serialization format are both keyed by visit order.
pub trait ParamSet {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64]));
}

// ---------------------------------------------------------------------------
// Activations

/// Element-wise activation fused into the owning layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation. The relu
    /// subgradient at exactly zero is taken as zero.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Kaiming-style init std for a layer with this activation.
    fn init_std(self, fan_in: usize) -> f64 {
        match self {
            Activation::Relu => (2.0 / fan_in as f64).sqrt(),
            Activation::Linear => (1.0 / fan_in as f64).sqrt(),
        }
    }
}

// ---------------------------------------------------------------------------
// Dense

/// Fully-connected layer: `out = act(W x + b)`, `W` row-major
/// `[out_dim × in_dim]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    // Forward caches consumed by backward.
    input: Vec<f64>,
    preact: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "dense dims must be positive");
        let std = activation.init_std(in_dim);
        let w = (0..in_dim * out_dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            w,
            b: vec![0.0; out_dim],
            dw: vec![0.0; in_dim * out_dim],
            db: vec![0.0; out_dim],
            in_dim,
            out_dim,
            activation,
            input: Vec::new(),
            preact: Vec::new(),
            output: Vec::new(),
        }
    }

    /// Zeroes the weights and biases in place (used where a head must
    /// start as the identity-like "predict nothing" map).
    pub fn zero_parameters(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&mut self, input: &[f64]) -> &[f64] {
        assert_eq!(input.len(), self.in_dim, "dense input length");
        self.input.clear();
        self.input.extend_from_slice(input);
        self.preact.clear();
        for row in 0..self.out_dim {
            let w_row = &self.w[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.b[row];
            for (wj, xj) in w_row.iter().zip(input) {
                acc += wj * xj;
            }
            self.preact.push(acc);
        }
        self.output.clear();
        self.output
            .extend(self.preact.iter().map(|&p| self.activation.apply(p)));
        &self.output
    }

    /// Accumulates `dw`/`db` and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.out_dim, "dense grad length");
        assert_eq!(self.input.len(), self.in_dim, "backward before forward");
        let mut grad_in = vec![0.0; self.in_dim];
        for row in 0..self.out_dim {
            let dpre = grad_out[row] * self.activation.derivative(self.preact[row]);
            if dpre == 0.0 {
                continue;
            }
            self.db[row] += dpre;
            let w_row = &self.w[row * self.in_dim..(row + 1) * self.in_dim];
            let dw_row = &mut self.dw[row * self.in_dim..(row + 1) * self.in_dim];
            for j in 0..self.in_dim {
                dw_row[j] += dpre * self.input[j];
                grad_in[j] += dpre * w_row[j];
            }
        }
        grad_in
    }
}

impl ParamSet for Dense {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        f("w", &mut self.w, &mut self.dw);
        f("b", &mut self.b, &mut self.db);
    }
}

// ---------------------------------------------------------------------------
// Conv1d

/// Valid-mode 1-D convolution (sliding correlation, no flip) over
/// channel-major input: `out[f][t] = b[f] + Σ_c Σ_j w[f][c][j] ·
/// x[c][t+j]`, output length `t_in − kernel + 1`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    in_channels: usize,
    filters: usize,
    kernel: usize,
    activation: Activation,
    input: Vec<f64>,
    t_in: usize,
    preact: Vec<f64>,
    output: Vec<f64>,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(
            in_channels > 0 && filters > 0 && kernel > 0,
            "conv dims must be positive"
        );
        let fan_in = in_channels * kernel;
        let std = activation.init_std(fan_in);
        let w = (0..filters * fan_in)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            w,
            b: vec![0.0; filters],
            dw: vec![0.0; filters * fan_in],
            db: vec![0.0; filters],
            in_channels,
            filters,
            kernel,
            activation,
            input: Vec::new(),
            t_in: 0,
            preact: Vec::new(),
            output: Vec::new(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        assert!(t_in >= self.kernel, "conv input shorter than kernel");
        t_in - self.kernel + 1
    }

    /// `input` is `[in_channels × t_in]` flat; returns `[filters × t_out]`.
    pub fn forward(&mut self, input: &[f64], t_in: usize) -> &[f64] {
        assert_eq!(
            input.len(),
            self.in_channels * t_in,
            "conv input length vs channel count"
        );
        let t_out = self.out_len(t_in);
        self.input.clear();
        self.input.extend_from_slice(input);
        self.t_in = t_in;
        self.preact.clear();
        self.preact.resize(self.filters * t_out, 0.0);
        for f in 0..self.filters {
            let out_row = &mut self.preact[f * t_out..(f + 1) * t_out];
            out_row.fill(self.b[f]);
            for c in 0..self.in_channels {
                let w_tap =
                    &self.w[(f * self.in_channels + c) * self.kernel..][..self.kernel];
                let x_row = &input[c * t_in..(c + 1) * t_in];
                for (t, out) in out_row.iter_mut().enumerate() {
                    let window = &x_row[t..t + self.kernel];
                    let mut acc = 0.0;
                    for (wj, xj) in w_tap.iter().zip(window) {
                        acc += wj * xj;
                    }
                    *out += acc;
                }
            }
        }
        self.output.clear();
        self.output
            .extend(self.preact.iter().map(|&p| self.activation.apply(p)));
        &self.output
    }

    /// Accumulates `dw`/`db` and returns the gradient w.r.t. the input
    /// (same `[in_channels × t_in]` layout).
    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        let t_out = self.out_len(self.t_in);
        assert_eq!(grad_out.len(), self.filters * t_out, "conv grad length");
        let mut grad_in = vec![0.0; self.in_channels * self.t_in];
        for f in 0..self.filters {
            for t in 0..t_out {
                let dpre = grad_out[f * t_out + t]
                    * self.activation.derivative(self.preact[f * t_out + t]);
                if dpre == 0.0 {
                    continue;
                }
                self.db[f] += dpre;
                for c in 0..self.in_channels {
                    let base = (f * self.in_channels + c) * self.kernel;
                    let w_tap = &self.w[base..base + self.kernel];
                    let dw_tap = &mut self.dw[base..base + self.kernel];
                    let x_window = &self.input[c * self.t_in + t..][..self.kernel];
                    let g_window = &mut grad_in[c * self.t_in + t..][..self.kernel];
                    for j in 0..self.kernel {
                        dw_tap[j] += dpre * x_window[j];
                        g_window[j] += dpre * w_tap[j];
                    }
                }
            }
        }
        grad_in
    }
}

impl ParamSet for Conv1d {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        f("w", &mut self.w, &mut self.dw);
        f("b", &mut self.b, &mut self.db);
    }
}

// ---------------------------------------------------------------------------
// Max pooling

/// Non-overlapping max-pooling of width 2 per channel. An odd trailing
/// element is dropped. Ties route the gradient to the earlier element.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Vec<usize>,
    in_len: usize,
    channels: usize,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn out_len(t_in: usize) -> usize {
        t_in / 2
    }

    /// `input` is `[channels × t_in]` flat; returns `[channels × t_in/2]`.
    pub fn forward(&mut self, input: &[f64], channels: usize, t_in: usize) -> Vec<f64> {
        assert_eq!(input.len(), channels * t_in, "pool input length");
        let t_out = Self::out_len(t_in);
        self.argmax.clear();
        self.in_len = input.len();
        self.channels = channels;
        let mut out = Vec::with_capacity(channels * t_out);
        for c in 0..channels {
            let row = c * t_in;
            for t in 0..t_out {
                let a = row + 2 * t;
                // Strict comparison keeps the first element on ties.
                let idx = if input[a + 1] > input[a] { a + 1 } else { a };
                self.argmax.push(idx);
                out.push(input[idx]);
            }
        }
        out
    }

    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.argmax.len(), "pool grad length");
        let mut grad_in = vec![0.0; self.in_len];
        for (g, &idx) in grad_out.iter().zip(&self.argmax) {
            grad_in[idx] += g;
        }
        grad_in
    }
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Fused softmax + cross-entropy against a hard label. Returns
/// `(loss, dloss/dlogits)`; the gradient is the familiar
/// `softmax(logits) − onehot(target)`.
pub fn softmax_xent(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    assert!(target < logits.len(), "target class out of range");
    let mut probs = softmax(logits);
    // Clamp away from zero so a confidently-wrong prediction yields a
    // large but finite loss instead of inf — but never launder NaN
    // (f64::max ignores it), or a diverged run would keep "training".
    let p = probs[target];
    let loss = if p.is_nan() { f64::NAN } else { -p.max(1e-300).ln() };
    probs[target] -= 1.0;
    (loss, probs)
}

// ---------------------------------------------------------------------------
