//! Per-cell flow vectors between consecutive frames and a harness that
//! measures how a cellwise transform of the inputs reorients them.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};

/// `[M-2, N-2, 2]` flow for one transition; channel 0 is vertical
/// (up + down), channel 1 horizontal (left + right).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix(pub Array3<f64>);

impl FlowMatrix {
    pub fn vertical(&self) -> ArrayView2<'_, f64> {
        self.0.slice(s![.., .., 0])
    }

    pub fn horizontal(&self) -> ArrayView2<'_, f64> {
        self.0.slice(s![.., .., 1])
    }
}

/// Interior-restricted neighbour views `(up, down, left, right)`, each
/// `[M-2, N-2]`.
pub fn shifted_views(
    y: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>)> {
    let (m, n) = y.dim();
    if m < 3 || n < 3 {
        return Err(Error::Domain(format!(
            "flow needs at least a 3x3 grid, got {m}x{n}"
        )));
    }
    Ok((
        y.slice(s![0..m - 2, 1..n - 1]).to_owned(),
        y.slice(s![2..m, 1..n - 1]).to_owned(),
        y.slice(s![1..m - 1, 0..n - 2]).to_owned(),
        y.slice(s![1..m - 1, 2..n]).to_owned(),
    ))
}

/// Differences between the interior of `y_t` and the four shifted views of
/// `y_prev`, summed per axis.
pub fn flow_matrix(y_t: ArrayView2<'_, f64>, y_prev: ArrayView2<'_, f64>) -> Result<FlowMatrix> {
    if y_t.dim() != y_prev.dim() {
        return Err(Error::Domain(format!(
            "frame shapes differ: {:?} vs {:?}",
            y_t.dim(),
            y_prev.dim()
        )));
    }
    let (a, b, c, d) = shifted_views(y_prev)?;
    let (m, n) = y_t.dim();
    let inner = y_t.slice(s![1..m - 1, 1..n - 1]);
    let mut f = Array3::zeros((m - 2, n - 2, 2));
    for i in 0..m - 2 {
        for j in 0..n - 2 {
            let x = inner[[i, j]];
            f[[i, j, 0]] = (x - a[[i, j]]) + (x - b[[i, j]]);
            f[[i, j, 1]] = (x - c[[i, j]]) + (x - d[[i, j]]);
        }
    }
    Ok(FlowMatrix(f))
}

/// Flow for every transition of a `[T, M, N]` sequence.
pub fn flow_sequence(x: ArrayView3<'_, f64>) -> Result<Vec<FlowMatrix>> {
    (1..x.dim().0)
        .map(|t| {
            flow_matrix(
                x.slice(s![t, .., ..]),
                x.slice(s![t - 1, .., ..]),
            )
        })
        .collect()
}

/// Angle in degrees between two 2-vectors: 0 for a pair of zero vectors,
/// 90 when exactly one is zero.
pub fn vector_angle_deg(a: [f64; 2], b: [f64; 2]) -> f64 {
    let za = a == [0.0, 0.0];
    let zb = b == [0.0, 0.0];
    match (za, zb) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 90.0,
        _ => {
            let cross = a[0] * b[1] - a[1] * b[0];
            let dot = a[0] * b[0] + a[1] * b[1];
            cross.abs().atan2(dot).to_degrees()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationStats {
    pub mean_angle_deg: f64,
    /// Mean of `|F'| / |F|` over cells with a nonzero original vector;
    /// NaN when there are none.
    pub mean_magnitude_ratio: f64,
    pub cells: usize,
}

/// Applies `transform` to every frame and compares the flow vectors
/// before and after, cell by cell over all transitions.
pub fn perturbation_diagnostic<F>(x: ArrayView3<'_, f64>, transform: F) -> Result<PerturbationStats>
where
    F: Fn(ArrayView2<'_, f64>) -> Array2<f64>,
{
    let t = x.dim().0;
    if t < 2 {
        return Err(Error::Domain("perturbation diagnostic needs T >= 2".into()));
    }
    let mut y = Array3::zeros(x.raw_dim());
    for i in 0..t {
        let out = transform(x.slice(s![i, .., ..]));
        if out.dim() != (x.dim().1, x.dim().2) {
            return Err(Error::Domain("transform changed the frame shape".into()));
        }
        y.slice_mut(s![i, .., ..]).assign(&out);
    }
    let before = flow_sequence(x)?;
    let after = flow_sequence(y.view())?;
    let (mut angle, mut ratio, mut cells, mut ratio_cells) = (0.0, 0.0, 0usize, 0usize);
    for (fa, fb) in before.iter().zip(&after) {
        let (m, n, _) = fa.0.dim();
        for i in 0..m {
            for j in 0..n {
                let a = [fa.0[[i, j, 0]], fa.0[[i, j, 1]]];
                let b = [fb.0[[i, j, 0]], fb.0[[i, j, 1]]];
                angle += vector_angle_deg(a, b);
                cells += 1;
                let na = a[0].hypot(a[1]);
                if na > 0.0 {
                    ratio += b[0].hypot(b[1]) / na;
                    ratio_cells += 1;
                }
            }
        }
    }
    Ok(PerturbationStats {
        mean_angle_deg: angle / cells as f64,
        mean_magnitude_ratio: if ratio_cells == 0 {
            f64::NAN
        } else {
            ratio / ratio_cells as f64
        },
        cells,
    })
}

/// Every `k`-th interior vector as `(row, col, vertical, horizontal)`,
/// with grid coordinates of the full frame.
pub fn quiver_samples(flow: &FlowMatrix, k: usize) -> Vec<(usize, usize, f64, f64)> {
    let k = k.max(1);
    let (m, n, _) = flow.0.dim();
    let mut out = Vec::new();
    for i in (0..m).step_by(k) {
        for j in (0..n).step_by(k) {
            out.push((i + 1, j + 1, flow.0[[i, j, 0]], flow.0[[i, j, 1]]));
        }
    }
    out
}
