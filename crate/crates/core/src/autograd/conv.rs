//! Dense kernels behind the convolutional graph ops.
//!
//! Tensors are `[batch, channels, height, width]`, row-major. Convolutions are
//! stride 1 with "same" zero padding (odd kernels only) and are lowered to a
//! GEMM over an im2col buffer. Work is split across the batch axis; partial
//! weight gradients are reduced in batch order so results do not depend on
//! thread scheduling.

use ndarray::{ArrayD, ArrayView2, IxDyn};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims4 {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub fn of(a: &ArrayD<f64>) -> Self {
        let s = a.shape();
        assert_eq!(s.len(), 4, "expected a 4-d tensor, got shape {s:?}");
        Dims4 {
            b: s[0],
            c: s[1],
            h: s[2],
            w: s[3],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self) -> usize {
        self.c * self.h * self.w
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let di = ki as isize - pad;
                let dj = kj as isize - pad;
                for i in 0..h {
                    let si = i as isize + di;
                    let out = &mut dst[i * w..(i + 1) * w];
                    if si < 0 || si >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    for (j, o) in out.iter_mut().enumerate() {
                        let sj = j as isize + dj;
                        *o = if sj < 0 || sj >= w as isize {
                            0.0
                        } else {
                            src[sj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, x: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                let di = ki as isize - pad;
                let dj = kj as isize - pad;
                for i in 0..h {
                    let si = i as isize + di;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[si as usize * w..(si as usize + 1) * w];
                    for j in 0..w {
                        let sj = j as isize + dj;
                        if sj >= 0 && sj < w as isize {
                            dst[sj as usize] += src[i * w + j];
                        }
                    }
                }
            }
        }
    }
}

fn mat<'a>(data: &'a [f64], rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn kernel_size(weight: &ArrayD<f64>) -> usize {
    let s = weight.shape();
    assert_eq!(s.len(), 4, "conv weight must be [out, in, k, k]");
    assert_eq!(s[2], s[3], "conv kernels must be square");
    assert!(s[2] % 2 == 1, "same padding needs an odd kernel, got {}", s[2]);
    s[2]
}

/// `x: [B, C, H, W]`, `weight: [O, C, K, K]`, `bias: [O]` → `[B, O, H, W]`.
pub(crate) fn conv2d_forward(
    x: &ArrayD<f64>,
    weight: &ArrayD<f64>,
    bias: Option<&ArrayD<f64>>,
) -> ArrayD<f64> {
    let d = Dims4::of(x);
    let k = kernel_size(weight);
    let o = weight.shape()[0];
    assert_eq!(
        weight.shape()[1],
        d.c,
        "conv expects {} input channels, got {}",
        weight.shape()[1],
        d.c
    );
    let hw = d.plane();
    let ckk = d.c * k * k;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let wt = weight.as_standard_layout();
    let wmat = mat(wt.as_slice().expect("standard layout"), o, ckk);
    let bias: Option<Vec<f64>> = bias.map(|b| b.iter().copied().collect());

    let mut out = vec![0.0; d.b * o * hw];
    out.par_chunks_mut(o * hw)
        .zip(xs.par_chunks(d.sample()))
        .for_each(|(out_s, x_s)| {
            let mut cols = vec![0.0; ckk * hw];
            im2col(x_s, d.c, d.h, d.w, k, &mut cols);
            let y = wmat.dot(&mat(&cols, ckk, hw));
            for (oi, row) in y.outer_iter().enumerate() {
                let b = bias.as_ref().map_or(0.0, |b| b[oi]);
                let dst = &mut out_s[oi * hw..(oi + 1) * hw];
                for (dv, &yv) in dst.iter_mut().zip(row.iter()) {
                    *dv = yv + b;
                }
            }
        });
    ArrayD::from_shape_vec(IxDyn(&[d.b, o, d.h, d.w]), out).expect("conv output shape")
}

/// Returns `(dx, dweight, dbias)`.
pub(crate) fn conv2d_backward(
    x: &ArrayD<f64>,
    weight: &ArrayD<f64>,
    grad_out: &ArrayD<f64>,
) -> (ArrayD<f64>, ArrayD<f64>, ArrayD<f64>) {
    let d = Dims4::of(x);
    let k = kernel_size(weight);
    let o = weight.shape()[0];
    let hw = d.plane();
    let ckk = d.c * k * k;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let g = grad_out.as_standard_layout();
    let gs = g.as_slice().expect("standard layout");
    let wt = weight.as_standard_layout();
    let wmat = mat(wt.as_slice().expect("standard layout"), o, ckk);
    let wmat_t = wmat.t();

    let mut dx = vec![0.0; d.b * d.sample()];
    let partial_dw: Vec<ndarray::Array2<f64>> = dx
        .par_chunks_mut(d.sample())
        .zip(xs.par_chunks(d.sample()))
        .zip(gs.par_chunks(o * hw))
        .map(|((dx_s, x_s), g_s)| {
            let mut cols = vec![0.0; ckk * hw];
            im2col(x_s, d.c, d.h, d.w, k, &mut cols);
            let gm = mat(g_s, o, hw);
            let dw = gm.dot(&mat(&cols, ckk, hw).t());
            let dcols = wmat_t.dot(&gm);
            col2im(
                dcols.as_slice().expect("standard layout"),
                d.c,
                d.h,
                d.w,
                k,
                dx_s,
            );
            dw
        })
        .collect();

    let mut dw = ndarray::Array2::<f64>::zeros((o, ckk));
    for p in &partial_dw {
        dw += p;
    }
    let mut db = vec![0.0; o];
    for g_s in gs.chunks(o * hw) {
        for (oi, acc) in db.iter_mut().enumerate() {
            *acc += g_s[oi * hw..(oi + 1) * hw].iter().sum::<f64>();
        }
    }
    (
        ArrayD::from_shape_vec(IxDyn(&[d.b, d.c, d.h, d.w]), dx).expect("dx shape"),
        dw.into_shape_with_order(IxDyn(weight.shape()))
            .expect("dw shape"),
        ArrayD::from_shape_vec(IxDyn(&[o]), db).expect("db shape"),
    )
}

/// 2×2 stride-2 transposed convolution.
/// `x: [B, C, H, W]`, `weight: [C, O, 2, 2]`, `bias: [O]` → `[B, O, 2H, 2W]`.
pub(crate) fn conv_transpose2_forward(
    x: &ArrayD<f64>,
    weight: &ArrayD<f64>,
    bias: Option<&ArrayD<f64>>,
) -> ArrayD<f64> {
    let d = Dims4::of(x);
    let ws = weight.shape();
    assert_eq!(ws.len(), 4);
    assert_eq!(ws[0], d.c, "transposed conv input channels");
    assert_eq!((ws[2], ws[3]), (2, 2), "transposed conv kernel must be 2x2");
    let o = ws[1];
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[d.b, o, 2 * d.h, 2 * d.w]));
    for b in 0..d.b {
        for oc in 0..o {
            let bv = bias.map_or(0.0, |bb| bb[[oc]]);
            for i in 0..d.h {
                for j in 0..d.w {
                    for p in 0..2 {
                        for q in 0..2 {
                            let mut acc = bv;
                            for c in 0..d.c {
                                acc += x[[b, c, i, j]] * weight[[c, oc, p, q]];
                            }
                            out[[b, oc, 2 * i + p, 2 * j + q]] = acc;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_transpose2_backward(
    x: &ArrayD<f64>,
    weight: &ArrayD<f64>,
    grad_out: &ArrayD<f64>,
) -> (ArrayD<f64>, ArrayD<f64>, ArrayD<f64>) {
    let d = Dims4::of(x);
    let o = weight.shape()[1];
    let mut dx = ArrayD::<f64>::zeros(x.raw_dim());
    let mut dw = ArrayD::<f64>::zeros(weight.raw_dim());
    let mut db = ArrayD::<f64>::zeros(IxDyn(&[o]));
    for b in 0..d.b {
        for oc in 0..o {
            for i in 0..d.h {
                for j in 0..d.w {
                    for p in 0..2 {
                        for q in 0..2 {
                            let g = grad_out[[b, oc, 2 * i + p, 2 * j + q]];
                            db[[oc]] += g;
                            for c in 0..d.c {
                                dx[[b, c, i, j]] += g * weight[[c, oc, p, q]];
                                dw[[c, oc, p, q]] += g * x[[b, c, i, j]];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// 2×2 max pooling; returns the pooled tensor and, for every output entry,
/// the flat index of the selected input entry.
pub(crate) fn max_pool2_forward(x: &ArrayD<f64>) -> (ArrayD<f64>, Vec<usize>) {
    let d = Dims4::of(x);
    assert!(
        d.h % 2 == 0 && d.w % 2 == 0,
        "max pooling needs even spatial dims, got {}x{}",
        d.h,
        d.w
    );
    let (oh, ow) = (d.h / 2, d.w / 2);
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(d.b * d.c * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for bc in 0..d.b * d.c {
        let base = bc * d.plane();
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * d.w + 2 * j;
                for (p, q) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + p) * d.w + 2 * j + q;
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out.push(xs[best]);
                arg.push(best);
            }
        }
    }
    (
        ArrayD::from_shape_vec(IxDyn(&[d.b, d.c, oh, ow]), out).expect("pool shape"),
        arg,
    )
}
