//! Convolutional classifier heads: a 4-conv-layer variant for the
//! non-negative SNR regime, a 3-conv-layer variant for the negative
//! regime, and the published 3-layer baseline comparator. All share
//! the same recipe — 50 filters of width 8, valid padding, pair
//! max-pooling after the first two conv layers only, a 512-wide relu
//! dense layer, and a linear class head read through softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FRAME_LEN;
use crate::nn::{softmax, Activation, Conv1d, Dense, MaxPool2, ParamSet};
use crate::rng::{derived_rng, stream};

pub const DEFAULT_FILTERS: usize = 50;
pub const DEFAULT_KERNEL: usize = 8;
pub const DEFAULT_DENSE_WIDTH: usize = 512;

// ---------------------------------------------------------------------------
// SNR regimes

/// Which of the two independently-trained models a frame belongs to.
/// Zero dB sits in the non-negative regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrRegime {
    NonNegative,
    Negative,
}

impl SnrRegime {
    pub const ALL: [SnrRegime; 2] = [SnrRegime::NonNegative, SnrRegime::Negative];

    pub fn contains(self, snr_db: f64) -> bool {
        match self {
            SnrRegime::NonNegative => snr_db >= 0.0,
            SnrRegime::Negative => snr_db < 0.0,
        }
    }

    pub fn of(snr_db: f64) -> Self {
        if snr_db >= 0.0 {
            SnrRegime::NonNegative
        } else {
            SnrRegime::Negative
        }
    }

    /// Conv depth of this regime's classifier variant.
    pub fn conv_layers(self) -> usize {
        match self {
            SnrRegime::NonNegative => 4,
            SnrRegime::Negative => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrRegime::NonNegative => "non_negative",
            SnrRegime::Negative => "negative",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        SnrRegime::ALL
            .into_iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| Error::InvalidParam(format!("unknown SNR regime {name:?}")))
    }
}

impl std::fmt::Display for SnrRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture used for the no-correction baseline comparator:
/// `Published` is the flat 3-conv-layer network reference results
/// compare against; `RegimeMatched` clones the corrected model's conv
/// depth so the comparison isolates the correction module alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineArch {
    Published,
    RegimeMatched,
}

impl BaselineArch {
    pub fn conv_layers(self, regime: SnrRegime) -> usize {
        match self {
            BaselineArch::Published => 3,
            BaselineArch::RegimeMatched => regime.conv_layers(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineArch::Published => "published",
            BaselineArch::RegimeMatched => "regime_matched",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [BaselineArch::Published, BaselineArch::RegimeMatched]
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::InvalidParam(format!("unknown baseline arch {name:?}")))
    }
}

impl std::fmt::Display for BaselineArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// Everything needed to rebuild a classifier's layer stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub conv_layers: usize,
    pub input_len: usize,
    pub in_channels: usize,
    pub n_classes: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dense_width: usize,
}

impl CnnConfig {
    /// The regime's standard variant on 128-sample frames.
    pub fn for_regime(regime: SnrRegime, in_channels: usize, n_classes: usize) -> Self {
        Self {
            conv_layers: regime.conv_layers(),
            input_len: FRAME_LEN,
            in_channels,
            n_classes,
            filters: DEFAULT_FILTERS,
            kernel: DEFAULT_KERNEL,
            dense_width: DEFAULT_DENSE_WIDTH,
        }
    }

    /// Per-stage sequence lengths: input, then after every conv and
    /// every pool, in forward order. Pair pooling follows the first
    /// two conv layers only.
    pub fn shape_trace(&self) -> Result<Vec<usize>> {
        if self.conv_layers == 0
            || self.input_len == 0
            || self.in_channels == 0
            || self.n_classes == 0
            || self.filters == 0
            || self.kernel == 0
            || self.dense_width == 0
        {
            return Err(Error::InvalidParam(
                "classifier config fields must be positive".into(),
            ));
        }
        let mut trace = vec![self.input_len];
        let mut len = self.input_len;
        for layer in 0..self.conv_layers {
            if len < self.kernel {
                return Err(Error::InvalidParam(format!(
                    "shape trace underflow: conv layer {layer} sees length {len} < kernel {}",
                    self.kernel
                )));
            }
            len = len - self.kernel + 1;
            trace.push(len);
            if layer < 2 {
                len = MaxPool2::out_len(len);
                if len == 0 {
                    return Err(Error::InvalidParam(format!(
                        "shape trace underflow: pool after conv layer {layer} empties the sequence"
                    )));
                }
                trace.push(len);
            }
        }
        Ok(trace)
    }

    /// Width of the flattened conv stack feeding the dense layer.
    pub fn flatten_len(&self) -> Result<usize> {
        Ok(self.filters * *self.shape_trace()?.last().expect("nonempty trace"))
    }
}

// ---------------------------------------------------------------------------
// The classifier network

/// Built layer stack with forward/backward plumbing. Construction is
/// deterministic per seed; the realized shape trace is kept for
/// inspection and asserted against the config at build time.
#[derive(Debug, Clone)]
pub struct Cnn {
    pub convs: Vec<Conv1d>,
    pools: Vec<MaxPool2>,
    pub dense: Dense,
    pub out: Dense,
    config: CnnConfig,
    trace: Vec<usize>,
}

/// Deterministically initialized classifier for `config`.
pub fn build_cnn(config: &CnnConfig, seed: u64) -> Result<Cnn> {
    let trace = config.shape_trace()?;
    let flatten = config.flatten_len()?;
    let mut rng = derived_rng(seed, &[stream::INIT]);
    let mut convs = Vec::with_capacity(config.conv_layers);
    let mut channels = config.in_channels;
    let mut len = config.input_len;
    for layer in 0..config.conv_layers {
        convs.push(Conv1d::new(
            channels,
            config.filters,
            config.kernel,
            Activation::Relu,
            &mut rng,
        ));
        channels = config.filters;
        len = len - config.kernel + 1;
        if layer < 2 {
            len = MaxPool2::out_len(len);
        }
    }
    assert_eq!(
        flatten,
        config.filters * len,
        "flatten width must agree with the shape trace"
    );
    let dense = Dense::new(flatten, config.dense_width, Activation::Relu, &mut rng);
    let out = Dense::new(config.dense_width, config.n_classes, Activation::Linear, &mut rng);
    let pools = vec![MaxPool2::new(); config.conv_layers.min(2)];
    Ok(Cnn {
        convs,
        pools,
        dense,
        out,
        config: config.clone(),
        trace,
    })
}

impl Cnn {
    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    /// Realized per-stage lengths (input, conv/pool outputs in order).
    pub fn shape_trace(&self) -> &[usize] {
        &self.trace
    }

    /// Forward pass to class logits. Input is channel-major
    /// `[in_channels × input_len]`.
    pub fn forward(&mut self, input: &[f64]) -> &[f64] {
        assert_eq!(
            input.len(),
            self.config.in_channels * self.config.input_len,
            "classifier input shape"
        );
        let mut current = input.to_vec();
        let mut len = self.config.input_len;
        for layer in 0..self.convs.len() {
            let conv_out = self.convs[layer].forward(&current, len).to_vec();
            len = len - self.config.kernel + 1;
            current = if layer < 2 {
                let pooled = self.pools[layer].forward(&conv_out, self.config.filters, len);
                len = MaxPool2::out_len(len);
                pooled
            } else {
                conv_out
            };
        }
        let hidden = self.dense.forward(&current).to_vec();
        self.out.forward(&hidden)
    }

    /// Backward pass from logit gradients; accumulates parameter
    /// gradients and returns the gradient w.r.t. the input stack.
    pub fn backward(&mut self, grad_logits: &[f64]) -> Vec<f64> {
        let grad_hidden = self.out.backward(grad_logits);
        let mut grad = self.dense.backward(&grad_hidden);
        for layer in (0..self.convs.len()).rev() {
            if layer < 2 {
                grad = self.pools[layer].backward(&grad);
            }
            grad = self.convs[layer].backward(&grad);
        }
        grad
    }

    /// Softmax class probabilities for one input stack.
    pub fn classify(&mut self, input: &[f64]) -> Vec<f64> {
        let logits = self.forward(input).to_vec();
        softmax(&logits)
    }
}

impl ParamSet for Cnn {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit(&mut |name, d, g| f(&format!("conv{i}.{name}"), d, g));
        }
        self.dense
            .visit(&mut |name, d, g| f(&format!("dense.{name}"), d, g));
        self.out.visit(&mut |name, d, g| f(&format!("head.{name}"), d, g));
    }
}

// ---------------------------------------------------------------------------
