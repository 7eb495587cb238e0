//! Trainable weighted moving average over the target's trailing frames.
//!
//! Each prediction is `Σ w_k x_k / Σ w_k` over the last `T_in` frames
//! (oldest first); it is appended to the window before the next step.

use ndarray::{s, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelKind, SmaConfig};
use super::{check_batch, ForwardOutput, Forecaster};
use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::datastore::Batch;
use crate::error::{Error, Result};

/// Weight sums below this are treated as zero.
const MIN_WEIGHT_SUM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Sma {
    cfg: SmaConfig,
    features: usize,
    store: ParamStore,
    weights: ParamId,
}

impl Sma {
    /// Weights start uniform in `[0, 1)`.
    pub fn new(cfg: SmaConfig, features: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let w = ArrayD::from_shape_simple_fn(IxDyn(&[cfg.t_in]), || rng.random_range(0.0..1.0));
        let weights = store.add("weights", w);
        Ok(Self {
            cfg,
            features,
            store,
            weights,
        })
    }

    pub fn weights_id(&self) -> ParamId {
        self.weights
    }

    /// `[B, T_in, M, N]` → `[B, t_out, M, N]`.
    pub fn run(&self, g: &mut Graph, history: &Array4<f64>, t_out: usize) -> Result<Var> {
        let total: f64 = self.store.get(self.weights).sum();
        if total.abs() < MIN_WEIGHT_SUM || !total.is_finite() {
            return Err(Error::Prediction(format!(
                "moving-average weights sum to {total}; cannot normalize"
            )));
        }
        let (b, t_in, m, n) = history.dim();
        let w = g.param(&self.store, self.weights);
        let mut window: Vec<Var> = (0..t_in)
            .map(|t| {
                let f = history
                    .slice(s![.., t..t + 1, .., ..])
                    .to_owned()
                    .into_dyn();
                g.constant(f)
            })
            .collect();
        let mut frames = Vec::with_capacity(t_out);
        for _ in 0..t_out {
            let y = g.weighted_sum(&window, w);
            frames.push(y);
            window.remove(0);
            window.push(y);
        }
        let out = g.concat(&frames);
        debug_assert_eq!(g.shape(out), &[b, t_out, m, n]);
        Ok(out)
    }
}

impl Forecaster for Sma {
    fn kind(&self) -> ModelKind {
        ModelKind::Sma
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
        Ok(ForwardOutput {
            prediction: self.run(g, &batch.target_history(), batch.t_out())?,
            attention: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sma_with(weights: &[f64]) -> Sma {
        let mut m = Sma::new(
            SmaConfig {
                t_in: weights.len(),
                t_out: 4,
                init_seed: 0,
            },
            1,
        )
        .unwrap();
        let id = m.weights_id();
        m.params_mut()
            .get_mut(id)
            .assign(&ArrayD::from_shape_vec(IxDyn(&[weights.len()]), weights.to_vec()).unwrap());
        m
    }

    #[test]
    fn initial_weights_in_unit_interval() {
        let m = Sma::new(SmaConfig::default(), 1).unwrap();
        let w = m.params().get(m.weights_id());
        assert_eq!(w.len(), 30);
        assert!(w.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn equal_weights_average_then_recurse() {
        let m = sma_with(&[1.0, 1.0, 1.0]);
        let hist = Array4::from_shape_fn((1, 3, 1, 1), |(_, t, _, _)| [3.0, 6.0, 9.0][t]);
        let mut g = Graph::new();
        let y = m.run(&mut g, &hist, 2).unwrap();
        let v = g.value(y);
        assert!((v[[0, 0, 0, 0]] - 6.0).abs() < 1e-12);
        assert!((v[[0, 1, 0, 0]] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn last_frame_weight_is_persistence() {
        let mut w = vec![0.0; 30];
        w[29] = 1.0;
        let m = sma_with(&w);
        let hist = Array4::from_shape_fn((2, 30, 3, 3), |(b, t, i, j)| (b + t * i + j) as f64);
        let mut g = Graph::new();
        let y = m.run(&mut g, &hist, 4).unwrap();
        for t in 0..4 {
            let got: Vec<f64> = g.value(y).index_axis(ndarray::Axis(1), t).iter().copied().collect();
            let want: Vec<f64> = hist.slice(s![.., 29, .., ..]).iter().copied().collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn zero_weights_rejected() {
        let m = sma_with(&[0.0; 5]);
        let mut g = Graph::new();
        let err = m.run(&mut g, &Array4::zeros((1, 5, 3, 3)), 1);
        assert!(matches!(err, Err(Error::Prediction(_))));
    }
}
