//! Adam optimizer operating over a [`ParamSet`]'s visitation order.

use super::layers::ParamSet;

/// Adam with bias-corrected first and second moments. Moment state is
/// allocated lazily on the first step and keyed by tensor position in
/// the set's visit order, which must therefore stay fixed for the
/// optimizer's lifetime.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<Moment>,
}

#[derive(Debug, Clone)]
struct Moment {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using the gradients currently stored in the
    /// set. Gradients are left untouched; clear them separately.
    pub fn step(&mut self, params: &mut dyn ParamSet) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let first_step = self.moments.is_empty();
        let moments = &mut self.moments;
        let mut slot = 0usize;
        params.visit(&mut |name, data, grad| {
            if first_step {
                moments.push(Moment {
                    m: vec![0.0; data.len()],
                    v: vec![0.0; data.len()],
                });
            }
            let moment = moments
                .get_mut(slot)
                .unwrap_or_else(|| panic!("optimizer saw new tensor {name}"));
            assert_eq!(
                moment.m.len(),
                data.len(),
                "tensor {name} changed size under the optimizer"
            );
            for i in 0..data.len() {
                let g = grad[i];
                moment.m[i] = b1 * moment.m[i] + (1.0 - b1) * g;
                moment.v[i] = b2 * moment.v[i] + (1.0 - b2) * g * g;
                let m_hat = moment.m[i] / bc1;
                let v_hat = moment.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            slot += 1;
        });
        assert_eq!(
            slot,
            moments.len(),
            "param set shrank after the optimizer captured its layout"
        );
    }
}

// ---------------------------------------------------------------------------
