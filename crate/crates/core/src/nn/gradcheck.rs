//! Central-difference gradient verification for any [`ParamSet`].
//!
//! The caller runs its forward and backward passes first so the set
//! holds analytic gradients, then hands over a pure-forward loss
//! closure. Sampled parameters are nudged by ±h and the symmetric
//! finite difference is compared against the stored gradient with a
//! scale-aware relative error.

use rand::Rng;

use super::layers::ParamSet;
use crate::rng::seeded_rng;

/// Outcome of one [`grad_check`] sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error seen across every sampled parameter.
    pub max_rel_err: f64,
    /// `tensor[index]` label of the worst parameter.
    pub worst: String,
    /// How many parameters were actually probed.
    pub checked: usize,
}

/// Compares stored analytic gradients against central differences of
/// `loss`. Probes up to `per_tensor` randomly chosen entries of every
/// tensor (all entries when a tensor is that small). The relative
/// error uses `max(|fd| + |analytic|, 0.01 * max|grad|, 1e-8)` as its
/// denominator so near-zero gradients are judged on the set's own
/// scale instead of exploding.
pub fn grad_check<P: ParamSet>(
    params: &mut P,
    loss: &mut dyn FnMut(&mut P) -> f64,
    per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    let h = 1e-6;
    // Snapshot names, values, and analytic gradients up front: the
    // loss closure may overwrite forward caches but must not touch
    // parameters or gradients.
    let mut names: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut grads: Vec<Vec<f64>> = Vec::new();
    params.visit(&mut |name, data, grad| {
        names.push(name.to_string());
        values.push(data.to_vec());
        grads.push(grad.to_vec());
    });
    let max_abs_grad = grads
        .iter()
        .flatten()
        .fold(0.0f64, |acc, g| acc.max(g.abs()));

    let mut rng = seeded_rng(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for tensor in 0..names.len() {
        let len = values[tensor].len();
        let indices: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            let mut picked: Vec<usize> =
                (0..per_tensor).map(|_| rng.gen_range(0..len)).collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        };
        for idx in indices {
            let base = values[tensor][idx];
            set_entry(params, tensor, idx, base + h);
            let up = loss(params);
            set_entry(params, tensor, idx, base - h);
            let down = loss(params);
            set_entry(params, tensor, idx, base);
            let fd = (up - down) / (2.0 * h);
            let analytic = grads[tensor][idx];
            let denom = (fd.abs() + analytic.abs())
                .max(0.01 * max_abs_grad)
                .max(1e-8);
            let rel = (fd - analytic).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{}[{idx}]", names[tensor]);
            }
        }
    }
    report
}

/// Writes one parameter entry by visit position, leaving all gradients
/// untouched.
fn set_entry<P: ParamSet>(params: &mut P, tensor: usize, idx: usize, value: f64) {
    let mut k = 0usize;
    params.visit(&mut |_, data, _| {
        if k == tensor {
            data[idx] = value;
        }
        k += 1;
    });
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{softmax_xent, Activation, Dense};
    use crate::nn::zero_grads;

    struct TinyNet {
        hidden: Dense,
        out: Dense,
    }

    impl TinyNet {
        fn new(seed: u64) -> Self {
            let mut rng = seeded_rng(seed);
            Self {
                hidden: Dense::new(6, 5, Activation::Relu, &mut rng),
                out: Dense::new(5, 3, Activation::Linear, &mut rng),
            }
        }

        fn loss(&mut self, inputs: &[[f64; 6]], targets: &[usize]) -> f64 {
            inputs
                .iter()
                .zip(targets)
                .map(|(x, &t)| {
                    let hid = self.hidden.forward(x).to_vec();
                    let logits = self.out.forward(&hid).to_vec();
                    softmax_xent(&logits, t).0
                })
                .sum::<f64>()
                / inputs.len() as f64
        }

        fn loss_and_backward(&mut self, inputs: &[[f64; 6]], targets: &[usize]) -> f64 {
            let scale = 1.0 / inputs.len() as f64;
            let mut total = 0.0;
            for (x, &t) in inputs.iter().zip(targets) {
                let hid = self.hidden.forward(x).to_vec();
                let logits = self.out.forward(&hid).to_vec();
                let (loss, mut dlogits) = softmax_xent(&logits, t);
                total += loss;
                for d in &mut dlogits {
                    *d *= scale;
                }
                let dhid = self.out.backward(&dlogits);
                self.hidden.backward(&dhid);
            }
            total * scale
        }
    }

    impl ParamSet for TinyNet {
        fn visit(&mut self, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
            self.hidden
                .visit(&mut |name, d, g| f(&format!("hidden.{name}"), d, g));
            self.out.visit(&mut |name, d, g| f(&format!("out.{name}"), d, g));
        }
    }

    fn fixture() -> (TinyNet, Vec<[f64; 6]>, Vec<usize>) {
        let net = TinyNet::new(19);
        let inputs = vec![
            [0.3, -1.1, 0.8, 2.0, -0.4, 0.05],
            [-0.9, 0.2, 1.4, -2.2, 0.6, -0.3],
            [1.7, 0.1, -0.5, 0.9, -1.3, 0.7],
        ];
        let targets = vec![0, 2, 1];
        (net, inputs, targets)
    }

    #[test]
    fn test_two_layer_stack_passes_gradient_check() {
        let (mut net, inputs, targets) = fixture();
        zero_grads(&mut net);
        net.loss_and_backward(&inputs, &targets);
        let report = grad_check(
            &mut net,
            &mut |n: &mut TinyNet| n.loss(&inputs, &targets),
            10,
            77,
        );
        // Small tensors (5 + 3 biases) are probed exhaustively; the two
        // weight matrices get up to 10 samples each, less dedup losses.
        assert!(report.checked >= 20, "too few probes: {}", report.checked);
        assert!(
            report.max_rel_err < 1e-6,
            "dense stack gradient check failed at {} ({})",
            report.worst,
            report.max_rel_err
        );
    }

    #[test]
    fn test_corrupted_gradient_is_flagged() {
        let (mut net, inputs, targets) = fixture();
        zero_grads(&mut net);
        net.loss_and_backward(&inputs, &targets);
        // Sabotage one stored gradient; every entry gets probed because
        // per_tensor exceeds the tensor sizes.
        net.out.db[1] += 0.5;
        let report = grad_check(
            &mut net,
            &mut |n: &mut TinyNet| n.loss(&inputs, &targets),
            1000,
            78,
        );
        assert!(
            report.max_rel_err > 1e-2,
            "corrupted gradient slipped through: {}",
            report.max_rel_err
        );
        assert_eq!(
            report.worst, "out.b[1]",
            "the corrupted slot must be named as the worst offender"
        );
    }
}
