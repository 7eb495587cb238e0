use std::collections::HashMap;

use ndarray::{ArrayD, Axis, IxDyn, Slice, Zip};

use super::conv;
use super::params::{ParamGrads, ParamId, ParamStore};

/// Node handle inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Reduction set for [`Graph::softmax`] on `[B, C, H, W]` tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxOver {
    /// Over channels, independently at every spatial position.
    Channels,
    /// Over all `H·W` positions, independently for every channel.
    Plane,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ConvTranspose2 {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    SliceChannels {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    Reshape(Var),
    Softmax {
        x: Var,
        over: SoftmaxOver,
    },
    WeightedSum {
        xs: Vec<Var>,
        w: Var,
    },
    SumN(Vec<Var>),
    Mse(Var, Var),
    DotConst {
        x: Var,
        weights: ArrayD<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: ArrayD<f64>,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode tape. Build a fresh graph per forward pass; parameters are
/// copied in from a [`ParamStore`] on first use.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn plane_view(shape: &[usize]) -> (usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected a 4-d tensor, got {shape:?}");
    (shape[0], shape[1], shape[2] * shape[3])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param => true,
            Op::Constant => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.constant(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, &[]);
        self.params.insert(id, v);
        v
    }

    fn assert_same_shape(&self, a: Var, b: Var, op: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{op}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "add");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "sub");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "mul");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a) * factor;
        self.push(v, Op::Scale(a, factor), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    /// Same-padded, stride-1 convolution. `w: [O, C, K, K]`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let v = conv::conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(v, Op::Conv2d { x, w, b }, &inputs)
    }

    /// 2×2 stride-2 transposed convolution. `w: [C, O, 2, 2]`, `b: [O]`.
    pub fn conv_transpose2(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let v = conv::conv_transpose2_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
        );
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(v, Op::ConvTranspose2 { x, w, b }, &inputs)
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (v, argmax) = conv::max_pool2_forward(self.value(x));
        self.push(v, Op::MaxPool2 { x, argmax }, &[x])
    }

    /// Channels `start..start + len` of a `[B, C, ...]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self
            .value(x)
            .slice_axis(Axis(1), Slice::from(start..start + len))
            .to_owned();
        self.push(v, Op::SliceChannels { x, start }, &[x])
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat: incompatible shapes");
        self.push(v, Op::Concat(xs.to_vec()), xs)
    }

    /// `out.flat[i] = x.flat[index[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Var {
        let src = self.value(x).as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let data: Vec<f64> = index.iter().map(|&i| src[i]).collect();
        let v = ArrayD::from_shape_vec(IxDyn(shape), data).expect("gather: index/shape mismatch");
        self.push(v, Op::Gather { x, index }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let v = self
            .value(x)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        self.push(v, Op::Reshape(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, over: SoftmaxOver) -> Var {
        let v = softmax_forward(self.value(x), over);
        self.push(v, Op::Softmax { x, over }, &[x])
    }

    /// `Σ w_k x_k / Σ w_k` with `w` a 1-d tensor of length `xs.len()`.
    pub fn weighted_sum(&mut self, xs: &[Var], w: Var) -> Var {
        let wv = self.value(w);
        assert_eq!(wv.len(), xs.len(), "weighted_sum: weight count");
        let total: f64 = wv.sum();
        let mut out = ArrayD::zeros(self.value(xs[0]).raw_dim());
        for (k, &x) in xs.iter().enumerate() {
            out.scaled_add(wv[[k]] / total, self.value(x));
        }
        let mut inputs = xs.to_vec();
        inputs.push(w);
        self.push(
            out,
            Op::WeightedSum {
                xs: xs.to_vec(),
                w,
            },
            &inputs,
        )
    }

    pub fn sum_n(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "sum of nothing");
        let mut out = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            out += self.value(x);
        }
        self.push(out, Op::SumN(xs.to_vec()), xs)
    }

    /// Mean squared error as a 0-d tensor.
    pub fn mse(&mut self, pred: Var, target: Var) -> Var {
        self.assert_same_shape(pred, target, "mse");
        let n = self.value(pred).len() as f64;
        let s: f64 = Zip::from(self.value(pred))
            .and(self.value(target))
            .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
        self.push(
            ArrayD::from_elem(IxDyn(&[]), s / n),
            Op::Mse(pred, target),
            &[pred, target],
        )
    }

    /// `Σ x ⊙ weights` as a 0-d tensor.
    pub fn dot_const(&mut self, x: Var, weights: ArrayD<f64>) -> Var {
        assert_eq!(self.shape(x), weights.shape(), "dot_const: shape");
        let s = (self.value(x) * &weights).sum();
        self.push(
            ArrayD::from_elem(IxDyn(&[]), s),
            Op::DotConst { x, weights },
            &[x],
        )
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        assert_eq!(a.len(), 1, "not a scalar");
        a.iter().next().copied().unwrap_or(0.0)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(ArrayD::ones(self.value(output).raw_dim()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &ArrayD<f64>, grads: &mut [Option<ArrayD<f64>>]) {
        let mut acc = |v: Var, delta: ArrayD<f64>| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * self.value(*b));
                acc(*b, g * self.value(*a));
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                acc(*a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(*a, d);
            }
            Op::Conv2d { x, w, b } => {
                let (dx, dw, db) = conv::conv2d_backward(self.value(*x), self.value(*w), g);
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    acc(*b, db);
                }
            }
            Op::ConvTranspose2 { x, w, b } => {
                let (dx, dw, db) =
                    conv::conv_transpose2_backward(self.value(*x), self.value(*w), g);
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    acc(*b, db);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                acc(*x, scatter(self.value(*x), argmax, g));
            }
            Op::SliceChannels { x, start } => {
                let mut d = ArrayD::zeros(self.value(*x).raw_dim());
                let len = g.shape()[1];
                d.slice_axis_mut(Axis(1), Slice::from(*start..*start + len))
                    .assign(g);
                acc(*x, d);
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let c = self.shape(x)[1];
                    acc(
                        x,
                        g.slice_axis(Axis(1), Slice::from(offset..offset + c))
                            .to_owned(),
                    );
                    offset += c;
                }
            }
            Op::Gather { x, index } => {
                acc(*x, scatter(self.value(*x), index, g));
            }
            Op::Reshape(x) => {
                let d = g
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(self.value(*x).raw_dim())
                    .expect("reshape grad");
                acc(*x, d);
            }
            Op::Softmax { x, over } => {
                acc(*x, softmax_backward(&node.value, g, *over));
            }
            Op::WeightedSum { xs, w } => {
                let wv = self.value(*w);
                let total: f64 = wv.sum();
                let mut dw = ArrayD::zeros(wv.raw_dim());
                for (k, &x) in xs.iter().enumerate() {
                    acc(x, g * (wv[[k]] / total));
                    let s: f64 = Zip::from(g)
                        .and(self.value(x))
                        .and(&node.value)
                        .fold(0.0, |a, &gv, &xv, &ov| a + gv * (xv - ov));
                    dw[[k]] = s / total;
                }
                acc(*w, dw);
            }
            Op::SumN(xs) => {
                for &x in xs {
                    acc(x, g.clone());
                }
            }
            Op::Mse(p, t) => {
                let gs = g.iter().next().copied().unwrap_or(0.0);
                let n = self.value(*p).len() as f64;
                let d = (self.value(*p) - self.value(*t)) * (2.0 * gs / n);
                acc(*t, -&d);
                acc(*p, d);
            }
            Op::DotConst { x, weights } => {
                let gs = g.iter().next().copied().unwrap_or(0.0);
                acc(*x, weights * gs);
            }
        }
    }
}

fn scatter(like: &ArrayD<f64>, index: &[usize], g: &ArrayD<f64>) -> ArrayD<f64> {
    let mut d = vec![0.0; like.len()];
    let g = g.as_standard_layout();
    for (&i, &gv) in index.iter().zip(g.iter()) {
        d[i] += gv;
    }
    ArrayD::from_shape_vec(like.raw_dim(), d).expect("scatter shape")
}

fn softmax_forward(x: &ArrayD<f64>, over: SoftmaxOver) -> ArrayD<f64> {
    let (b, c, hw) = plane_view(x.shape());
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let mut out = vec![0.0; xs.len()];
    match over {
        SoftmaxOver::Channels => {
            for bi in 0..b {
                let base = bi * c * hw;
                for p in 0..hw {
                    let idx = |ci: usize| base + ci * hw + p;
                    let m = (0..c).map(|ci| xs[idx(ci)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for ci in 0..c {
                        let e = (xs[idx(ci)] - m).exp();
                        out[idx(ci)] = e;
                        z += e;
                    }
                    for ci in 0..c {
                        out[idx(ci)] /= z;
                    }
                }
            }
        }
        SoftmaxOver::Plane => {
            for (src, dst) in xs.chunks(hw).zip(out.chunks_mut(hw)) {
                let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = (s - m).exp();
                    z += *d;
                }
                for d in dst.iter_mut() {
                    *d /= z;
                }
            }
        }
    }
    ArrayD::from_shape_vec(x.raw_dim(), out).expect("softmax shape")
}

fn softmax_backward(y: &ArrayD<f64>, g: &ArrayD<f64>, over: SoftmaxOver) -> ArrayD<f64> {
    let (b, c, hw) = plane_view(y.shape());
    let ys = y.as_standard_layout();
    let ys = ys.as_slice().expect("standard layout");
    let gs = g.as_standard_layout();
    let gs = gs.as_slice().expect("standard layout");
    let mut d = vec![0.0; ys.len()];
    match over {
        SoftmaxOver::Channels => {
            for bi in 0..b {
                let base = bi * c * hw;
                for p in 0..hw {
                    let idx = |ci: usize| base + ci * hw + p;
                    let dot: f64 = (0..c).map(|ci| ys[idx(ci)] * gs[idx(ci)]).sum();
                    for ci in 0..c {
                        d[idx(ci)] = ys[idx(ci)] * (gs[idx(ci)] - dot);
                    }
                }
            }
        }
        SoftmaxOver::Plane => {
            for ((yc, gc), dc) in ys.chunks(hw).zip(gs.chunks(hw)).zip(d.chunks_mut(hw)) {
                let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                for ((dv, &yv), &gv) in dc.iter_mut().zip(yc).zip(gc) {
                    *dv = yv * (gv - dot);
                }
            }
        }
    }
    ArrayD::from_shape_vec(y.raw_dim(), d).expect("softmax grad shape")
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient with respect to any node; `None` if the output does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients for every parameter in `store`; unused parameters get zeros.
    pub fn params(&self, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros(store);
        for (&id, &v) in &self.params {
            if let Some(g) = self.wrt(v) {
                out.get_mut(id).assign(g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_matches_hand_arithmetic() {
        let mut g = Graph::new();
        let p = g.constant(array![[1.0, 2.0], [0.0, 1.0]].into_dyn());
        let t = g.constant(ArrayD::zeros(IxDyn(&[2, 2])));
        let l = g.mse(p, t);
        assert_eq!(g.scalar(l), 1.5);
    }

    #[test]
    fn softmax_over_channels_sums_to_one() {
        let mut g = Graph::new();
        let x = g.constant(
            ArrayD::from_shape_vec(IxDyn(&[1, 2, 1, 1]), vec![0.0, 3f64.ln()]).unwrap(),
        );
        let y = g.softmax(x, SoftmaxOver::Channels);
        let v = g.value(y);
        assert!((v[[0, 0, 0, 0]] - 0.25).abs() < 1e-15);
        assert!((v[[0, 1, 0, 0]] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn shared_parameter_accumulates_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", array![2.0].into_dyn());
        let mut g = Graph::new();
        let w1 = g.param(&store, id);
        let w2 = g.param(&store, id);
        assert_eq!(w1, w2);
        let y = g.mul(w1, w2);
        let l = g.dot_const(y, array![1.0].into_dyn());
        let grads = g.backward(l).params(&store);
        assert_eq!(grads.get(id)[[0]], 4.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(array![1.0, 2.0].into_dyn());
        let b = g.constant(array![3.0, 4.0].into_dyn());
        let c = g.mul(a, b);
        let l = g.dot_const(c, array![1.0, 1.0].into_dyn());
        let grads = g.backward(l);
        assert!(grads.wrt(a).is_none());
    }
}
