//! U-Net mapping T_in target frames (as channels) to T_out frames.
//!
//! Inputs are reflect-padded at the bottom and right up to a multiple of
//! `2^depth` and the output is cropped back.

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelKind, UNetConfig};
use super::init::{bias_uniform, fan_in_uniform, fan_in_uniform_transposed};
use super::{check_batch, ForwardOutput, Forecaster};
use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::datastore::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        Self {
            w: store.add(format!("{name}.w"), fan_in_uniform(rng, &[cout, cin, k, k])),
            b: store.add(format!("{name}.b"), bias_uniform(rng, cout, cin * k * k)),
        }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv2d(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Copy)]
struct DoubleConv(Conv, Conv);

impl DoubleConv {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        Self(
            Conv::new(store, rng, &format!("{name}.0"), cin, cout, 3),
            Conv::new(store, rng, &format!("{name}.1"), cout, cout, 3),
        )
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let a = self.0.apply(g, store, x);
        let a = g.relu(a);
        let b = self.1.apply(g, store, a);
        g.relu(b)
    }
}

#[derive(Debug, Clone, Copy)]
struct Up {
    w: ParamId,
    b: ParamId,
    conv: DoubleConv,
}

#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    features: usize,
    store: ParamStore,
    down: Vec<DoubleConv>,
    up: Vec<Up>,
    head: Conv,
}

/// Mirror index without repeating the edge, for any pad length.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

/// Reflect-pads `[B, C, M, N]` at the bottom/right to `(pm, pn)`.
pub fn reflect_pad(x: &Array4<f64>, pm: usize, pn: usize) -> Array4<f64> {
    let (b, c, m, n) = x.dim();
    Array4::from_shape_fn((b, c, pm, pn), |(bi, ci, i, j)| x[[bi, ci, reflect(i, m), reflect(j, n)]])
}

impl UNet {
    pub fn new(cfg: UNetConfig, features: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let c = cfg.base_channels;
        let mut down = vec![DoubleConv::new(&mut store, &mut rng, "down.0", cfg.t_in, c)];
        for l in 1..=cfg.depth {
            down.push(DoubleConv::new(
                &mut store,
                &mut rng,
                &format!("down.{l}"),
                c << (l - 1),
                c << l,
            ));
        }
        let mut up = Vec::new();
        for l in (1..=cfg.depth).rev() {
            let (hi, lo) = (c << l, c << (l - 1));
            up.push(Up {
                w: store.add(format!("up.{l}.t.w"), fan_in_uniform_transposed(&mut rng, &[hi, lo, 2, 2])),
                b: store.add(format!("up.{l}.t.b"), bias_uniform(&mut rng, lo, hi * 4)),
                conv: DoubleConv::new(&mut store, &mut rng, &format!("up.{l}"), hi, lo),
            });
        }
        let head = Conv::new(&mut store, &mut rng, "head", c, cfg.t_out, 1);
        Ok(Self {
            cfg,
            features,
            store,
            down,
            up,
            head,
        })
    }

    fn multiple(&self) -> usize {
        1 << self.cfg.depth
    }

    /// `[B, T_in, M, N]` → `[B, T_out, M, N]`.
    pub fn run(&self, g: &mut Graph, history: &Array4<f64>) -> Var {
        let (b, _, m, n) = history.dim();
        let k = self.multiple();
        let (pm, pn) = (m.div_ceil(k) * k, n.div_ceil(k) * k);
        let store = &self.store;
        let x = g.constant(reflect_pad(history, pm, pn).into_dyn());
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = self.down[0].apply(g, store, x);
        for dc in &self.down[1..] {
            skips.push(h);
            let p = g.max_pool2(h);
            h = dc.apply(g, store, p);
        }
        for upl in &self.up {
            let (w, bb) = (g.param(store, upl.w), g.param(store, upl.b));
            let u = g.conv_transpose2(h, w, Some(bb));
            let skip = skips.pop().expect("one skip per level");
            let cat = g.concat(&[skip, u]);
            h = upl.conv.apply(g, store, cat);
        }
        let out = self.head.apply(g, store, h);
        if (pm, pn) == (m, n) {
            return out;
        }
        let t = self.cfg.t_out;
        let mut index = Vec::with_capacity(b * t * m * n);
        for bi in 0..b {
            for c in 0..t {
                for i in 0..m {
                    for j in 0..n {
                        index.push(((bi * t + c) * pm + i) * pn + j);
                    }
                }
            }
        }
        g.gather(out, index, &[b, t, m, n])
    }
}

impl Forecaster for UNet {
    fn kind(&self) -> ModelKind {
        ModelKind::Unet
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
        if batch.t_out() != self.cfg.t_out {
            return Err(Error::Shape(format!(
                "U-Net emits {} frames, batch asks for {}",
                self.cfg.t_out,
                batch.t_out()
            )));
        }
        Ok(ForwardOutput {
            prediction: self.run(g, &batch.target_history()),
            attention: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (0..10).map(|i| reflect(i, 3)).collect();
        assert_eq!(got, vec![0, 1, 2, 1, 0, 1, 2, 1, 0, 1]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn pad_mirrors_edges() {
        let x = array![[[[1.0, 2.0, 3.0]]]];
        let p = reflect_pad(&x, 2, 5);
        assert_eq!(p.index_axis(ndarray::Axis(2), 0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(p[[0, 0, 1, 0]], 1.0);
    }

    #[test]
    fn spatial_dims_preserved() {
        let cfg = UNetConfig {
            base_channels: 2,
            depth: 2,
            t_in: 3,
            t_out: 2,
            init_seed: 1,
        };
        let net = UNet::new(cfg, 1).unwrap();
        let mut g = Graph::new();
        let out = net.run(&mut g, &Array4::from_elem((2, 3, 5, 7), 0.3));
        assert_eq!(g.shape(out), &[2, 2, 5, 7]);
    }
}
