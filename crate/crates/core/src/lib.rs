//! Modulation-recognition workbench.
//!
//! The crate covers the full signal path of a small desk-scale
//! experiment:
//!
//! 1. [`modulation`] synthesizes 128-sample complex baseband frames for
//!    eight digital schemes (RRC-shaped linear constellations plus
//!    GFSK/CPFSK).
//! 2. [`channel`] drags each frame through a receiver-impairment chain:
//!    sample-rate-offset resampling, Rician multipath fading, a
//!    carrier-frequency-offset phase walk, and AWGN.
//! 3. [`dataset`] batches labelled frames into reproducible,
//!    fingerprinted corpora; [`trainer`] fits the correction +
//!    classifier cascade end-to-end from modulation labels alone.
//!
//! Everything is driven by explicit seeds ([`rng`]) so datasets, model
//! bundles, and reports are bit-reproducible.

mod binio;

pub mod bundle;
pub mod channel;
pub mod classifier;
pub mod correction;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frame;
pub mod modulation;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use frame::{ComplexSample, IQFrame, Scheme, FRAME_LEN};
