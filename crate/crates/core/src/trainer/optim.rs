//! Optimizers and gradient clipping.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamGrads, ParamStore};

/// Rescales `grads` to `threshold` when their global L2 norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut ParamGrads, threshold: f64) -> f64 {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = grads.global_norm();
    if norm > threshold {
        grads.scale(threshold / norm);
    }
    norm
}

/// Adaptive-moment optimizer state; moments follow the store's parameter
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<ArrayD<f64>>,
    #[serde(skip)]
    pub v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let step_size = self.lr / c1;
        let ids: Vec<_> = store.ids().collect();
        for ((id, g), (m, v)) in ids
            .into_iter()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = store.get_mut(id);
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step_size * *m / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn update(&self, store: &mut ParamStore, grads: &ParamGrads) {
        let ids: Vec<_> = store.ids().collect();
        for (id, g) in ids.into_iter().zip(grads.iter()) {
            store.get_mut(id).scaled_add(-self.lr, g);
        }
    }
}
