//! Convolutional LSTM cell.

use rand_chacha::ChaCha8Rng;

use super::init::{bias_uniform, fan_in_uniform};
use crate::autograd::{Graph, ParamId, ParamStore, Var};

/// Hidden and cell state of one layer, each `[B, m, M, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerState {
    pub h: Var,
    pub s: Var,
}

/// Gate kernels are stored stacked in the order input, forget, output,
/// candidate: `w_x: [4m, n, K, K]`, `w_h: [4m, m, K, K]`, `b: [4m]`.
#[derive(Debug, Clone)]
pub struct ConvLstmCell {
    pub input_channels: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

impl ConvLstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        input_channels: usize,
        hidden: usize,
        kernel: usize,
    ) -> Self {
        let fan_in = (input_channels + hidden) * kernel * kernel;
        let w_x = store.add(
            format!("{prefix}.w_x"),
            fan_in_uniform(rng, &[4 * hidden, input_channels, kernel, kernel]),
        );
        let w_h = store.add(
            format!("{prefix}.w_h"),
            fan_in_uniform(rng, &[4 * hidden, hidden, kernel, kernel]),
        );
        let b = store.add(format!("{prefix}.b"), bias_uniform(rng, 4 * hidden, fan_in));
        Self {
            input_channels,
            hidden,
            kernel,
            w_x,
            w_h,
            b,
        }
    }

    /// One update. `state = None` stands for zero hidden and cell states.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        state: Option<LayerState>,
    ) -> LayerState {
        let m = self.hidden;
        let w_x = g.param(store, self.w_x);
        let b = g.param(store, self.b);
        let mut z = g.conv2d(x, w_x, Some(b));
        if let Some(st) = state {
            let w_h = g.param(store, self.w_h);
            let zh = g.conv2d(st.h, w_h, None);
            z = g.add(z, zh);
        }
        let zi = g.slice_channels(z, 0, m);
        let zf = g.slice_channels(z, m, m);
        let zo = g.slice_channels(z, 2 * m, m);
        let zs = g.slice_channels(z, 3 * m, m);
        let i = g.sigmoid(zi);
        let o = g.sigmoid(zo);
        let cand = g.tanh(zs);
        let fresh = g.mul(i, cand);
        let s = match state {
            Some(st) => {
                let f = g.sigmoid(zf);
                let keep = g.mul(f, st.s);
                g.add(keep, fresh)
            }
            None => fresh,
        };
        let ts = g.tanh(s);
        let h = g.mul(o, ts);
        LayerState { h, s }
    }
}
