//! Adam optimizer over a network's parameters.

use super::net::Net;
use super::Scalar;

/// Adam state for one network. Moment buffers are created on the first
/// step and keyed by parameter visit order, so the same optimizer must
/// always be paired with the same network.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Adam { beta1, beta2, eps: 1e-8, t: 0, state: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients currently held in `net`.
    /// Element math runs in f64 regardless of `S`; a tensor whose gradient
    /// is all zeros and whose moments are still zero is left bit-identical.
    pub fn step(&mut self, net: &mut Net<S>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        let state = &mut self.state;
        let mut slot = 0usize;
        net.visit_params(&mut |_, values, grads| {
            if state.len() == slot {
                state.push((vec![S::zero(); values.len()], vec![S::zero(); values.len()]));
            }
            let (m, v) = &mut state[slot];
            assert_eq!(m.len(), values.len(), "optimizer state shape drift");
            for i in 0..values.len() {
                let g = grads[i].to_f64c();
                let mi = beta1 * m[i].to_f64c() + (1.0 - beta1) * g;
                let vi = beta2 * v[i].to_f64c() + (1.0 - beta2) * g * g;
                m[i] = S::from_f64c(mi);
                v[i] = S::from_f64c(vi);
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                if update != 0.0 {
                    values[i] = S::from_f64c(values[i].to_f64c() - update);
                }
            }
            slot += 1;
        });
    }

    /// Serializes `(t, flattened state)` for checkpointing.
    pub fn export(&self) -> (u64, Vec<(Vec<S>, Vec<S>)>) {
        (self.t, self.state.clone())
    }

    /// Restores state captured by [`Self::export`].
    pub fn import(&mut self, t: u64, state: Vec<(Vec<S>, Vec<S>)>) {
        self.t = t;
        self.state = state;
    }
}
