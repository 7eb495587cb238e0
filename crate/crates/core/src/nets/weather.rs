//! Attention ConvLSTM encoder-decoder with a context matcher.

use ndarray::{s, Array5, Axis, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::Attention;
use super::config::{ModelConfig, ModelKind};
use super::convlstm::{ConvLstmCell, LayerState};
use super::init::{bias_uniform, fan_in_uniform};
use super::{check_batch, ForwardOutput, Forecaster};
use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::datastore::Batch;
use crate::error::Result;

/// Per-layer state histories of the encoder, `histories[k][t]`.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub histories: Vec<Vec<LayerState>>,
    /// Attention weights `[B, d, M, N]` per input step.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct WeatherModel {
    cfg: ModelConfig,
    features: usize,
    store: ParamStore,
    attention: Attention,
    encoder: Vec<ConvLstmCell>,
    decoder: Vec<ConvLstmCell>,
    out_mid: (ParamId, ParamId),
    out_head: (ParamId, ParamId),
}

impl WeatherModel {
    pub fn new(cfg: ModelConfig, features: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let attention = Attention::new(
            &mut store,
            &mut rng,
            "attention",
            cfg.encoder_hidden[0],
            cfg.t_in,
            cfg.attention_q,
            cfg.attention_kernel,
            cfg.softmax_axis,
        );
        let mut encoder = Vec::new();
        let mut in_ch = features;
        for (k, (&m, &kk)) in cfg.encoder_hidden.iter().zip(&cfg.encoder_kernels).enumerate() {
            encoder.push(ConvLstmCell::new(&mut store, &mut rng, &format!("encoder.{k}"), in_ch, m, kk));
            in_ch = m;
        }
        let mut decoder = Vec::new();
        let mut in_ch = 1;
        for (k, (&m, &kk)) in cfg.decoder_hidden.iter().zip(&cfg.decoder_kernels).enumerate() {
            decoder.push(ConvLstmCell::new(&mut store, &mut rng, &format!("decoder.{k}"), in_ch, m, kk));
            in_ch = m;
        }
        let (mid, out) = cfg.output_conv_channels;
        let ok = cfg.output_kernel;
        let out_mid = (
            store.add("output.mid.w", fan_in_uniform(&mut rng, &[mid, in_ch, ok, ok])),
            store.add("output.mid.b", bias_uniform(&mut rng, mid, in_ch * ok * ok)),
        );
        let out_head = (
            store.add("output.head.w", fan_in_uniform(&mut rng, &[out, mid, ok, ok])),
            store.add("output.head.b", bias_uniform(&mut rng, out, mid * ok * ok)),
        );
        Ok(Self {
            cfg,
            features,
            store,
            attention,
            encoder,
            decoder,
            out_mid,
            out_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn attention_module(&self) -> &Attention {
        &self.attention
    }

    /// Runs the attention-weighted encoder over `[B, T_in, d, M, N]`.
    pub fn encode(&self, g: &mut Graph, inputs: &Array5<f64>) -> Encoded {
        let (b, t_in, d, _, _) = inputs.dim();
        let store = &self.store;
        let windows = g.constant(Attention::feature_windows(inputs));
        let term = self.attention.window_term(g, store, windows);
        let mut states: Vec<Option<LayerState>> = vec![None; self.encoder.len()];
        let mut histories = vec![Vec::with_capacity(t_in); self.encoder.len()];
        let mut attention = Vec::with_capacity(t_in);
        for t in 0..t_in {
            let h_prev = states[0].map(|s| s.h);
            let e = self.attention.energies(g, store, term, h_prev, b, d);
            let a = self.attention.weights(g, e);
            let x_t = g.constant(inputs.index_axis(Axis(1), t).to_owned().into_dyn());
            let mut x = Attention::apply(g, a, x_t);
            attention.push(a);
            for (k, cell) in self.encoder.iter().enumerate() {
                let st = cell.step(g, store, x, states[k]);
                states[k] = Some(st);
                histories[k].push(st);
                x = st.h;
            }
        }
        Encoded {
            histories,
            attention,
        }
    }

    /// Decoder initial states: time sums of each encoder layer's states, in
    /// reversed layer order.
    pub fn context_match(g: &mut Graph, histories: &[Vec<LayerState>]) -> Vec<LayerState> {
        histories
            .iter()
            .rev()
            .map(|hist| {
                let hs: Vec<Var> = hist.iter().map(|s| s.h).collect();
                let ss: Vec<Var> = hist.iter().map(|s| s.s).collect();
                LayerState {
                    h: g.sum_n(&hs),
                    s: g.sum_n(&ss),
                }
            })
            .collect()
    }

    /// `[B, m_K, M, N]` → `[B, 1, M, N]`: convolution, tanh, convolution.
    pub fn output_conv(&self, g: &mut Graph, h: Var) -> Var {
        let store = &self.store;
        let (w1, b1) = (g.param(store, self.out_mid.0), g.param(store, self.out_mid.1));
        let mid = g.conv2d(h, w1, Some(b1));
        let act = g.tanh(mid);
        let (w2, b2) = (g.param(store, self.out_head.0), g.param(store, self.out_head.1));
        g.conv2d(act, w2, Some(b2))
    }

    /// Recursive decoding from `seed` (`[B, 1, M, N]`), feeding each
    /// prediction back as the next input. Returns `t_out` frames.
    pub fn decode(&self, g: &mut Graph, init: &[LayerState], seed: Var, t_out: usize) -> Vec<Var> {
        let mut states: Vec<LayerState> = init.to_vec();
        let mut input = seed;
        let mut frames = Vec::with_capacity(t_out);
        for _ in 0..t_out {
            let mut x = input;
            for (k, cell) in self.decoder.iter().enumerate() {
                let st = cell.step(g, &self.store, x, Some(states[k]));
                states[k] = st;
                x = st.h;
            }
            let y = self.output_conv(g, x);
            frames.push(y);
            input = y;
        }
        frames
    }

    /// Full forward pass over `[B, T_in, d, M, N]` inputs.
    pub fn run(
        &self,
        g: &mut Graph,
        inputs: &Array5<f64>,
        target_feature: usize,
        t_out: usize,
    ) -> ForwardOutput {
        let (b, t_in, _, m, n) = inputs.dim();
        let enc = self.encode(g, inputs);
        let init = Self::context_match(g, &enc.histories);
        let seed = inputs
            .slice(s![.., t_in - 1, target_feature, .., ..])
            .to_owned()
            .into_shape_with_order(IxDyn(&[b, 1, m, n]))
            .expect("seed shape");
        let seed = g.constant(seed);
        let frames = self.decode(g, &init, seed, t_out);
        ForwardOutput {
            prediction: g.concat(&frames),
            attention: enc.attention,
        }
    }
}

impl Forecaster for WeatherModel {
    fn kind(&self) -> ModelKind {
        ModelKind::WeatherModel
    }

    fn t_in(&self) -> usize {
        self.cfg.t_in
    }

    fn t_out(&self) -> usize {
        self.cfg.t_out
    }

    fn features(&self) -> usize {
        self.features
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).expect("config serializes")
    }

    fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<ForwardOutput> {
        check_batch(self, batch, true)?;
        Ok(self.run(g, &batch.inputs, batch.norm.target_feature, batch.t_out()))
    }
}
