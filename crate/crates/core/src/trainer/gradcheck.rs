//! Finite-difference checks of the model fragments on tiny instances.

use ndarray::{Array4, Array5, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{gradient_check, GradCheckReport, ParamStore};
use crate::nets::{Attention, Forecaster, ConvLstmCell, LayerState, ModelConfig, SoftmaxAxis, UNet, UNetConfig, WeatherModel};

/// Central-difference step used by the fragment checks.
pub const GRADCHECK_STEP: f64 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-1.0..1.0))
}

/// `p ↦ Σ c·(A p)` for a random matrix; its gradient is exact.
pub fn check_linear(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    store.add("w", uniform(&mut rng, &[3, 2, 1, 1]));
    let x = uniform(&mut rng, &[1, 2, 3, 3]);
    let c = uniform(&mut rng, &[1, 3, 3, 3]);
    gradient_check(&store, GRADCHECK_STEP, |g, s| {
        let w = g.param(s, s.find("w").expect("w"));
        let xv = g.constant(x.clone());
        let y = g.conv2d(xv, w, None);
        g.dot_const(y, c.clone())
    })
}

/// Two chained cell updates from a zero state on a `grid × grid` instance,
/// so both the first-step and the recurrent paths are exercised.
pub fn check_convlstm_step(grid: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let cell = ConvLstmCell::new(&mut store, &mut rng, "cell", 2, 2, 3);
    let x0 = uniform(&mut rng, &[1, 2, grid, grid]);
    let x1 = uniform(&mut rng, &[1, 2, grid, grid]);
    let ch = uniform(&mut rng, &[1, 2, grid, grid]);
    let cs = uniform(&mut rng, &[1, 2, grid, grid]);
    gradient_check(&store, GRADCHECK_STEP, |g, s| {
        let a = g.constant(x0.clone());
        let b = g.constant(x1.clone());
        let st = cell.step(g, s, a, None);
        let LayerState { h, s: c } = cell.step(g, s, b, Some(st));
        let lh = g.dot_const(h, ch.clone());
        let lc = g.dot_const(c, cs.clone());
        g.add(lh, lc)
    })
}

/// Energies, softmax and the weighted input for `features` features,
/// conditioned on a fixed hidden state.
pub fn check_attention(grid: usize, features: usize, axis: SoftmaxAxis, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let (hidden, t_in) = (2, 3);
    let att = Attention::new(&mut store, &mut rng, "attention", hidden, t_in, 2, 3, axis);
    let inputs = Array5::from_shape_simple_fn((1, t_in, features, grid, grid), || rng.random_range(-1.0..1.0));
    let h = uniform(&mut rng, &[1, hidden, grid, grid]);
    let c = uniform(&mut rng, &[1, features, grid, grid]);
    let x_last = inputs
        .index_axis(ndarray::Axis(1), t_in - 1)
        .to_owned()
        .into_dyn();
    gradient_check(&store, GRADCHECK_STEP, |g, s| {
        let windows = g.constant(Attention::feature_windows(&inputs));
        let term = att.window_term(g, s, windows);
        let hv = g.constant(h.clone());
        let e = att.energies(g, s, term, Some(hv), 1, features);
        let a = att.weights(g, e);
        let x = g.constant(x_last.clone());
        let weighted = g.mul(a, x);
        g.dot_const(weighted, c.clone())
    })
}

fn tiny_weather(features: usize, seed: u64) -> WeatherModel {
    let cfg = ModelConfig {
        encoder_hidden: vec![2, 2],
        decoder_hidden: vec![2, 2],
        encoder_kernels: vec![3, 1],
        decoder_kernels: vec![3, 1],
        attention_q: 2,
        attention_kernel: 3,
        output_conv_channels: (2, 1),
        output_kernel: 3,
        softmax_axis: SoftmaxAxis::Feature,
        t_in: 2,
        t_out: 2,
        init_seed: seed,
    };
    WeatherModel::new(cfg, features).expect("valid tiny config")
}

/// The two output convolutions with the tanh between them. The rest of
/// the tiny model's parameters get zero gradients on both sides.
pub fn check_output_conv(grid: usize, seed: u64) -> GradCheckReport {
    let model = tiny_weather(1, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let h = uniform(&mut rng, &[2, 2, grid, grid]);
    let c = uniform(&mut rng, &[2, 1, grid, grid]);
    gradient_check(model.params(), GRADCHECK_STEP, |g, s| {
        let mut m = model.clone();
        m.params_mut().copy_from(s);
        let hv = g.constant(h.clone());
        let y = m.output_conv(g, hv);
        g.dot_const(y, c.clone())
    })
}

/// End-to-end forward of a tiny attention encoder-decoder.
pub fn check_weather_model(grid: usize, features: usize, seed: u64) -> GradCheckReport {
    let model = tiny_weather(features, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let inputs = Array5::from_shape_simple_fn((1, 2, features, grid, grid), || rng.random_range(0.0..1.0));
    let c = uniform(&mut rng, &[1, 2, grid, grid]);
    gradient_check(model.params(), GRADCHECK_STEP, |g, s| {
        let mut m = model.clone();
        m.params_mut().copy_from(s);
        let out = m.run(g, &inputs, 0, 2);
        g.dot_const(out.prediction, c.clone())
    })
}

/// A depth-1 U-Net on a `grid × grid` instance (padded when odd).
pub fn check_unet(grid: usize, seed: u64) -> GradCheckReport {
    let cfg = UNetConfig {
        base_channels: 2,
        depth: 1,
        t_in: 2,
        t_out: 2,
        init_seed: seed,
    };
    let net = UNet::new(cfg, 1).expect("valid tiny config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let history = Array4::from_shape_simple_fn((1, 2, grid, grid), || rng.random_range(0.0..1.0));
    let c = uniform(&mut rng, &[1, 2, grid, grid]);
    gradient_check(net.params(), GRADCHECK_STEP, |g, s| {
        let mut n = net.clone();
        n.params_mut().copy_from(s);
        let y = n.run(g, &history);
        g.dot_const(y, c.clone())
    })
}
