//! Stacked ConvLSTM encoder-decoder baseline on the target feature alone.
//!
//! The encoder's final states seed the decoder in reversed layer order,
//! the decoder reads zero frames, and each output frame is a 1×1
//! convolution over the concatenated hidden states of all decoder layers.

use ndarray::{s, Array5, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ConvLstmConfig, ModelKind};
use super::convlstm::{ConvLstmCell, LayerState};
use super::init::{bias_uniform, fan_in_uniform};
use super::{check_batch, ForwardOutput, Forecaster};
use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::datastore::Batch;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct ConvLstmBaseline {
    cfg: ConvLstmConfig,
    features: usize,
    store: ParamStore,
    encoder: Vec<ConvLstmCell>,
    decoder: Vec<ConvLstmCell>,
    head: (ParamId, ParamId),
}

impl ConvLstmBaseline {
    pub fn new(cfg: ConvLstmConfig, features: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let mut encoder = Vec::new();
        let mut in_ch = 1;
        for (k, (&m, &kk)) in cfg.encoder_hidden.iter().zip(&cfg.encoder_kernels).enumerate() {
            encoder.push(ConvLstmCell::new(&mut store, &mut rng, &format!("encoder.{k}"), in_ch, m, kk));
            in_ch = m;
        }
        let mut decoder = Vec::new();
        let mut in_ch = 1;
        for (k, (&m, &kk)) in cfg
            .encoder_hidden
            .iter()
            .rev()
            .zip(cfg.encoder_kernels.iter().rev())
            .enumerate()
        {
            decoder.push(ConvLstmCell::new(&mut store, &mut rng, &format!("decoder.{k}"), in_ch, m, kk));
            in_ch = m;
        }
        let total: usize = cfg.encoder_hidden.iter().sum();
        let head = (
            store.add("head.w", fan_in_uniform(&mut rng, &[1, total, 1, 1])),
            store.add("head.b", bias_uniform(&mut rng, 1, total)),
        );
        Ok(Self {
            cfg,
            features,
            store,
            encoder,
            decoder,
            head,
        })
    }

    /// Forward pass over target histories `[B, T_in, 1, M, N]`.
    pub fn run(&self, g: &mut Graph, history: &Array5<f64>, t_out: usize) -> Var {
        let (b, t_in, _, m, n) = history.dim();
        let store = &self.store;
        let mut states: Vec<Option<LayerState>> = vec![None; self.encoder.len()];
        for t in 0..t_in {
            let frame = history
                .slice(s![.., t, .., .., ..])
                .to_owned()
                .into_dyn();
            let mut x = g.constant(frame);
            for (k, cell) in self.encoder.iter().enumerate() {
                let st = cell.step(g, store, x, states[k]);
                states[k] = Some(st);
                x = st.h;
            }
        }
        let mut dec: Vec<LayerState> = states
            .iter()
            .rev()
            .map(|s| s.expect("T_in >= 1"))
            .collect();
        let zero = g.zeros(&[b, 1, m, n]);
        let (w, bias) = (g.param(store, self.head.0), g.param(store, self.head.1));
        let mut frames = Vec::with_capacity(t_out);
        for _ in 0..t_out {
            let mut x = zero;
            let mut hs = Vec::with_capacity(self.decoder.len());
            for (k, cell) in self.decoder.iter().enumerate() {
                let st = cell.step(g, store, x, Some(dec[k]));
                dec[k] = st;
                hs.push(st.h);
                x = st.h;
            }
            let cat = g.concat(&hs);
            frames.push(g.conv2d(cat, w, Some(bias)));
        }
        g.concat(&frames)
    }
}

impl Forecaster for ConvLstmBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::Convlstm
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
        check_batch(self, batch, false)?;
        let (b, t, _, m, n) = batch.inputs.dim();
        let hist = batch
            .target_history()
            .into_shape_with_order(IxDyn(&[b, t, 1, m, n]))
            .expect("history shape")
            .into_dimensionality()
            .expect("5-d");
        Ok(ForwardOutput {
            prediction: self.run(g, &hist, batch.t_out()),
            attention: Vec::new(),
        })
    }
}
