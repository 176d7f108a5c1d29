//! Minimal feed-forward network engine: dense and 1-D convolution
//! layers with fused activations, pair max-pooling, softmax /
//! cross-entropy, Adam, and finite-difference gradient checking.
//!
//! Everything runs on flat `f64` slices with explicit dimensions —
//! no tensor abstraction, no threading inside a single forward or
//! backward pass. Layers cache whatever the matching backward pass
//! needs, so the call protocol is strictly
//! `forward → backward → (optimizer step) → zero_grads`.
//!
//! Parameters are exposed through [`ParamSet::visit`], which walks
//! `(name, values, gradients)` triples in a fixed order; the optimizer
//! and the model serializer both rely on that order being stable.

pub mod adam;
pub mod gradcheck;
pub mod layers;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    softmax, softmax_xent, Activation, Conv1d, Dense, MaxPool2, ParamSet,
};

/// Clears every gradient slot in the set. Call between optimizer steps;
/// backward passes accumulate.
pub fn zero_grads(set: &mut dyn ParamSet) {
    set.visit(&mut |_, _, grad| grad.fill(0.0));
}

/// Total number of learnable scalars in the set.
pub fn param_count(set: &mut dyn ParamSet) -> usize {
    let mut n = 0;
    set.visit(&mut |_, data, _| n += data.len());
    n
}
