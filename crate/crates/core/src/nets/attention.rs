//! Convolutional attention over input features.
//!
//! For feature `i` the energy map is `V_E * tanh(W_E * H + U_E * X^i)`,
//! where `H` is the first encoder layer's previous hidden state and `X^i`
//! is the feature's whole input window taken as `T_in` channels. `W_E`,
//! `U_E` and `V_E` are shared by all features. The energies are turned
//! into weights by a softmax over features (per cell) or over cells (per
//! feature).

use ndarray::{Array5, ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use super::config::SoftmaxAxis;
use super::init::fan_in_uniform;
use crate::autograd::{Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone)]
pub struct Attention {
    pub hidden: usize,
    pub t_in: usize,
    pub q: usize,
    pub kernel: usize,
    pub axis: SoftmaxAxis,
    /// `[Q, m, K, K]`
    pub w_e: ParamId,
    /// `[Q, T_in, K, K]`
    pub u_e: ParamId,
    /// `[1, Q, K, K]`
    pub v_e: ParamId,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        hidden: usize,
        t_in: usize,
        q: usize,
        kernel: usize,
        axis: SoftmaxAxis,
    ) -> Self {
        let w_e = store.add(format!("{prefix}.w_e"), fan_in_uniform(rng, &[q, hidden, kernel, kernel]));
        let u_e = store.add(format!("{prefix}.u_e"), fan_in_uniform(rng, &[q, t_in, kernel, kernel]));
        let v_e = store.add(format!("{prefix}.v_e"), fan_in_uniform(rng, &[1, q, kernel, kernel]));
        Self {
            hidden,
            t_in,
            q,
            kernel,
            axis,
            w_e,
            u_e,
            v_e,
        }
    }

    /// Rearranges `[B, T_in, d, M, N]` inputs into per-feature windows
    /// `[B·d, T_in, M, N]`.
    pub fn feature_windows(inputs: &Array5<f64>) -> ArrayD<f64> {
        let (b, t, d, m, n) = inputs.dim();
        inputs
            .view()
            .permuted_axes([0, 2, 1, 3, 4])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&[b * d, t, m, n]))
            .expect("window reshape")
    }

    /// `U_E * X^i` for all features; constant over the encoder steps.
    pub fn window_term(&self, g: &mut Graph, store: &ParamStore, windows: Var) -> Var {
        let u = g.param(store, self.u_e);
        g.conv2d(windows, u, None)
    }

    /// Energies `[B, d, M, N]`. `h_prev = None` stands for a zero state.
    pub fn energies(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        window_term: Var,
        h_prev: Option<Var>,
        batch: usize,
        features: usize,
    ) -> Var {
        let shape = g.shape(window_term).to_vec();
        let (m, n) = (shape[2], shape[3]);
        let pre = match h_prev {
            Some(h) => {
                let w = g.param(store, self.w_e);
                let wh = g.conv2d(h, w, None);
                let per = self.q * m * n;
                let index: Vec<usize> = (0..batch)
                    .flat_map(|b| (0..features).flat_map(move |_| b * per..(b + 1) * per))
                    .collect();
                let rep = g.gather(wh, index, &shape);
                g.add(rep, window_term)
            }
            None => window_term,
        };
        let act = g.tanh(pre);
        let v = g.param(store, self.v_e);
        let e = g.conv2d(act, v, None);
        g.reshape(e, &[batch, features, m, n])
    }

    pub fn weights(&self, g: &mut Graph, energies: Var) -> Var {
        g.softmax(energies, self.axis.into())
    }

    /// Scales each input entry by its weight: `A ⊙ X_t`, both `[B, d, M, N]`.
    pub fn apply(g: &mut Graph, weights: Var, x_t: Var) -> Var {
        g.mul(weights, x_t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn windows_are_grouped_by_feature() {
        let x = Array5::from_shape_fn((2, 3, 4, 2, 2), |(b, t, k, i, j)| {
            (b * 1000 + t * 100 + k * 10 + i * 2 + j) as f64
        });
        let w = Attention::feature_windows(&x);
        assert_eq!(w.shape(), &[8, 3, 2, 2]);
        // Row b·d + k holds feature k of sample b, time on channels.
        assert_eq!(w[[1 * 4 + 2, 1, 1, 0]], 1000.0 + 100.0 + 20.0 + 2.0);
    }

    #[test]
    fn zero_parameters_give_uniform_weights() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let att = Attention::new(&mut store, &mut rng, "a", 3, 2, 5, 3, SoftmaxAxis::Feature);
        for id in [att.w_e, att.u_e, att.v_e] {
            store.get_mut(id).fill(0.0);
        }
        let mut g = Graph::new();
        let x = Array5::from_shape_fn((1, 2, 4, 5, 5), |(_, t, k, i, j)| (t + k + i * j) as f64);
        let win = g.constant(Attention::feature_windows(&x));
        let term = att.window_term(&mut g, &store, win);
        let h = g.constant(ArrayD::ones(IxDyn(&[1, 3, 5, 5])));
        let e = att.energies(&mut g, &store, term, Some(h), 1, 4);
        assert!(g.value(e).iter().all(|&v| v == 0.0));
        let a = att.weights(&mut g, e);
        assert!(g.value(a).iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
