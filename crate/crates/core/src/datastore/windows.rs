//! Sliding windows, batch assembly and adaptive min-max normalization.

use std::ops::Range;

use chrono::{DateTime, Utc};
use ndarray::{s, Array3, Array4, Array5, ArrayD, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::GridSeries;
use crate::error::{Error, Result};

/// A (T_in input, T_out target) pair described by its position in a series.
///
/// Inputs are frames `[start, start + t_in)`, targets the target feature at
/// frames `[start + t_in, start + t_in + t_out)`. The anchor is the time of
/// the last input frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleWindow {
    pub start: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub target_feature: usize,
    pub anchor_time: DateTime<Utc>,
}

impl SampleWindow {
    pub fn input_range(&self) -> Range<usize> {
        self.start..self.start + self.t_in
    }

    pub fn target_range(&self) -> Range<usize> {
        self.start + self.t_in..self.start + self.t_in + self.t_out
    }

    /// `[T_in, d, M, N]`.
    pub fn inputs(&self, series: &GridSeries) -> Array4<f64> {
        series
            .values()
            .slice(s![self.input_range(), .., .., ..])
            .mapv(f64::from)
    }

    /// `[T_out, M, N]`.
    pub fn targets(&self, series: &GridSeries) -> Array3<f64> {
        series
            .values()
            .slice(s![self.target_range(), self.target_feature, .., ..])
            .mapv(f64::from)
    }
}

fn check_lengths(t_in: usize, t_out: usize) -> Result<()> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::Window(format!(
            "T_in and T_out must be >= 1, got {t_in} and {t_out}"
        )));
    }
    Ok(())
}

/// Every stride-1 window of the series.
pub fn make_windows(
    series: &GridSeries,
    t_in: usize,
    t_out: usize,
    target_feature: &str,
) -> Result<Vec<SampleWindow>> {
    check_lengths(t_in, t_out)?;
    let t = series.len_time();
    if t < t_in + t_out {
        return Err(Error::Window(format!(
            "series of length {t} is shorter than T_in + T_out = {}",
            t_in + t_out
        )));
    }
    windows_with_targets_in(series, t_in, t_out, target_feature, 0..t, 0)
}

/// Windows whose targets lie entirely inside `targets`, with inputs starting
/// no earlier than `earliest_input`. Inputs may reach back before
/// `targets.start`, so models with different T_in share the same targets.
pub fn windows_with_targets_in(
    series: &GridSeries,
    t_in: usize,
    t_out: usize,
    target_feature: &str,
    targets: Range<usize>,
    earliest_input: usize,
) -> Result<Vec<SampleWindow>> {
    check_lengths(t_in, t_out)?;
    let k = series.feature_index(target_feature)?;
    let end = targets.end.min(series.len_time());
    let first = targets.start.saturating_sub(t_in).max(earliest_input);
    let mut out = Vec::new();
    let mut s = first;
    while s + t_in + t_out <= end {
        if s + t_in >= targets.start {
            out.push(SampleWindow {
                start: s,
                t_in,
                t_out,
                target_feature: k,
                anchor_time: series.time_at(s + t_in - 1),
            });
        }
        s += 1;
    }
    if out.is_empty() {
        return Err(Error::Window(format!(
            "no window with T_in = {t_in}, T_out = {t_out} fits targets {targets:?} (inputs from {earliest_input})"
        )));
    }
    Ok(out)
}

/// Deterministic shuffle of `0..n` chunked into groups of `b`; the final
/// partial group is kept.
pub fn plan_batches(n: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if b == 0 {
        return Err(Error::Window("batch size must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Window("no windows to batch".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(b).map(<[usize]>::to_vec).collect())
}

/// Per-feature extent of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub feature_names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Set where `max == min`; such features normalize to zeros.
    pub degenerate: Vec<bool>,
    pub target_feature: usize,
}

impl NormalizationRecord {
    fn index_of(&self, feature: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == feature)
            .ok_or_else(|| Error::Schema(format!("feature `{feature}` not in record")))
    }

    pub fn target_name(&self) -> &str {
        &self.feature_names[self.target_feature]
    }

    /// `max - min` of the target feature.
    pub fn target_range(&self) -> f64 {
        self.max[self.target_feature] - self.min[self.target_feature]
    }

    pub fn normalize_value(&self, k: usize, x: f64) -> f64 {
        if self.degenerate[k] {
            0.0
        } else {
            (x - self.min[k]) / (self.max[k] - self.min[k])
        }
    }
}

/// Un-normalized windows stacked as `[b, T_in + T_out, d, M, N]`.
#[derive(Debug, Clone)]
pub struct RawBatch {
    pub block: Array5<f64>,
    pub t_in: usize,
    pub target_feature: usize,
    pub feature_names: Vec<String>,
    pub starts: Vec<usize>,
    pub anchors: Vec<DateTime<Utc>>,
}

impl RawBatch {
    pub fn from_windows(series: &GridSeries, windows: &[SampleWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Window("empty batch".into()))?;
        let (t_in, t_out, k) = (first.t_in, first.t_out, first.target_feature);
        if windows
            .iter()
            .any(|w| (w.t_in, w.t_out, w.target_feature) != (t_in, t_out, k))
        {
            return Err(Error::Window(
                "windows in one batch must share T_in, T_out and target".into(),
            ));
        }
        let (_, d, m, n) = series.values().dim();
        let span = t_in + t_out;
        let mut block = Array5::zeros((windows.len(), span, d, m, n));
        for (b, w) in windows.iter().enumerate() {
            if w.start + span > series.len_time() {
                return Err(Error::Window(format!(
                    "window at {} runs past the series end",
                    w.start
                )));
            }
            block
                .index_axis_mut(Axis(0), b)
                .assign(&series.values().slice(s![w.start..w.start + span, .., .., ..]).mapv(f64::from));
        }
        Ok(Self {
            block,
            t_in,
            target_feature: k,
            feature_names: series.feature_names(),
            starts: windows.iter().map(|w| w.start).collect(),
            anchors: windows.iter().map(|w| w.anchor_time).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.block.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> Array5<f64> {
        self.block.slice(s![.., ..self.t_in, .., .., ..]).to_owned()
    }

    pub fn targets(&self) -> Array4<f64> {
        self.block
            .slice(s![.., self.t_in.., self.target_feature, .., ..])
            .to_owned()
    }
}

/// A normalized batch: inputs `[b, T_in, d, M, N]`, targets `[b, T_out, M, N]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array5<f64>,
    pub targets: Array4<f64>,
    pub norm: NormalizationRecord,
    pub starts: Vec<usize>,
    pub anchors: Vec<DateTime<Utc>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_in(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn t_out(&self) -> usize {
        self.targets.dim().1
    }

    /// `(M, N)`.
    pub fn grid(&self) -> (usize, usize) {
        let (_, _, _, m, n) = self.inputs.dim();
        (m, n)
    }

    /// Target feature history `[b, T_in, M, N]`.
    pub fn target_history(&self) -> Array4<f64> {
        self.inputs
            .slice(s![.., .., self.norm.target_feature, .., ..])
            .to_owned()
    }
}

/// Min-max scales each feature over the whole block (all windows, inputs
/// and targets); targets use the target feature's extent.
pub fn normalize_batch(raw: &RawBatch) -> Batch {
    let d = raw.block.dim().2;
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for lane in raw.block.axis_iter(Axis(0)) {
        for frame in lane.axis_iter(Axis(0)) {
            for (k, plane) in frame.axis_iter(Axis(0)).enumerate() {
                for &v in plane.iter() {
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                }
            }
        }
    }
    let degenerate: Vec<bool> = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    let record = NormalizationRecord {
        feature_names: raw.feature_names.clone(),
        min,
        max,
        degenerate,
        target_feature: raw.target_feature,
    };
    let mut block = raw.block.clone();
    for mut lane in block.axis_iter_mut(Axis(0)) {
        for mut frame in lane.axis_iter_mut(Axis(0)) {
            for (k, mut plane) in frame.axis_iter_mut(Axis(0)).enumerate() {
                plane.mapv_inplace(|v| record.normalize_value(k, v));
            }
        }
    }
    let t_in = raw.t_in;
    Batch {
        inputs: block.slice(s![.., ..t_in, .., .., ..]).to_owned(),
        targets: block
            .slice(s![.., t_in.., raw.target_feature, .., ..])
            .to_owned(),
        norm: record,
        starts: raw.starts.clone(),
        anchors: raw.anchors.clone(),
    }
}

/// A single forecast window starting at `start` whose inputs are
/// normalized over their own extent. Targets are zero placeholders of
/// length `t_out`, since the future is not observed.
pub fn inference_batch(
    series: &GridSeries,
    start: usize,
    t_in: usize,
    t_out: usize,
    target_feature: &str,
) -> Result<Batch> {
    check_lengths(t_in, t_out)?;
    let k = series.feature_index(target_feature)?;
    if start + t_in > series.len_time() {
        return Err(Error::Window(format!(
            "inputs {start}..{} run past the series end ({})",
            start + t_in,
            series.len_time()
        )));
    }
    let raw = RawBatch {
        block: series
            .values()
            .slice(s![start..start + t_in, .., .., ..])
            .mapv(f64::from)
            .insert_axis(Axis(0)),
        t_in,
        target_feature: k,
        feature_names: series.feature_names(),
        starts: vec![start],
        anchors: vec![series.time_at(start + t_in - 1)],
    };
    let mut batch = normalize_batch(&raw);
    let (m, n) = (series.height(), series.width());
    batch.targets = Array4::zeros((1, t_out, m, n));
    Ok(batch)
}

/// Maps normalized values of `feature` back to physical units.
pub fn denormalize(
    values: &ArrayD<f64>,
    record: &NormalizationRecord,
    feature: &str,
) -> Result<ArrayD<f64>> {
    let k = record.index_of(feature)?;
    if record.degenerate[k] {
        return Err(Error::Denormalize(format!(
            "feature `{feature}` was constant ({}) in its batch; its scale is lost",
            record.min[k]
        )));
    }
    let (lo, hi) = (record.min[k], record.max[k]);
    Ok(values.mapv(|x| x * (hi - lo) + lo))
}

/// Shuffles, chunks and normalizes the windows.
pub fn assemble_batches(
    series: &GridSeries,
    windows: &[SampleWindow],
    b: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    plan_batches(windows.len(), b, seed)?
        .iter()
        .map(|members| {
            let ws: Vec<SampleWindow> = members.iter().map(|&i| windows[i]).collect();
            RawBatch::from_windows(series, &ws).map(|r| normalize_batch(&r))
        })
        .collect()
}

/// Produces batches on demand so large series never need to be stacked
/// in memory all at once.
pub trait BatchSource: Sync {
    /// Members of each batch for the given epoch, as opaque indices.
    fn epoch_plan(&self, epoch: usize) -> Result<Vec<Vec<usize>>>;
    fn load(&self, members: &[usize]) -> Result<Batch>;
}

/// Pre-assembled batches, served in a fixed order.
impl BatchSource for Vec<Batch> {
    fn epoch_plan(&self, _epoch: usize) -> Result<Vec<Vec<usize>>> {
        Ok((0..self.len()).map(|i| vec![i]).collect())
    }

    fn load(&self, members: &[usize]) -> Result<Batch> {
        match members {
            [i] => self
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Window(format!("no batch {i}"))),
            _ => Err(Error::Window("expected a single batch index".into())),
        }
    }
}

/// Windows over a series, shuffled with `seed + epoch` when `reshuffle` is
/// set and with `seed` alone otherwise.
#[derive(Debug, Clone)]
pub struct WindowBatches<'a> {
    pub series: &'a GridSeries,
    pub windows: Vec<SampleWindow>,
    pub batch_size: usize,
    pub seed: u64,
    pub reshuffle: bool,
}

impl WindowBatches<'_> {
    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }
}

impl BatchSource for WindowBatches<'_> {
    fn epoch_plan(&self, epoch: usize) -> Result<Vec<Vec<usize>>> {
        let seed = if self.reshuffle {
            self.seed.wrapping_add(epoch as u64)
        } else {
            self.seed
        };
        plan_batches(self.windows.len(), self.batch_size, seed)
    }

    fn load(&self, members: &[usize]) -> Result<Batch> {
        let ws = members
            .iter()
            .map(|&i| {
                self.windows
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Window(format!("no window {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        RawBatch::from_windows(self.series, &ws).map(|r| normalize_batch(&r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::grid::FeatureInfo;
    use chrono::{TimeDelta, TimeZone};

    fn series(t: usize, d: usize) -> GridSeries {
        let values = Array4::from_shape_fn((t, d, 3, 3), |(ti, k, i, j)| {
            (ti * 100 + k * 10 + i * 3 + j) as f32
        });
        let features = (0..d)
            .map(|k| FeatureInfo::new(format!("f{k}"), "u"))
            .collect();
        GridSeries::from_axes(
            values,
            features,
            &[0.0, 1.0, 2.0],
            &[0.0, 1.0, 2.0],
            Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap(),
            TimeDelta::hours(3),
        )
        .unwrap()
    }

    #[test]
    fn window_count_and_contents() {
        let s = series(25, 2);
        let ws = make_windows(&s, 10, 10, "f1").unwrap();
        assert_eq!(ws.len(), 6);
        // Oracle: enumerate every admissible start directly.
        let starts: Vec<usize> = (0..25).filter(|&st| st + 20 <= 25).collect();
        assert_eq!(ws.iter().map(|w| w.start).collect::<Vec<_>>(), starts);
        let w = ws[2];
        assert_eq!(w.targets(&s)[[0, 1, 1]], (12 * 100 + 10 + 4) as f64);
        assert_eq!(w.inputs(&s)[[9, 0, 0, 0]], 1100.0);
        assert_eq!(w.anchor_time, s.time_at(11));
    }

    #[test]
    fn window_boundaries() {
        let s = series(20, 1);
        assert_eq!(make_windows(&s, 10, 10, "f0").unwrap().len(), 1);
        let s = series(19, 1);
        assert!(matches!(make_windows(&s, 10, 10, "f0"), Err(Error::Window(_))));
        assert!(matches!(make_windows(&s, 0, 1, "f0"), Err(Error::Window(_))));
    }

    #[test]
    fn targets_restricted_to_range() {
        let s = series(40, 1);
        let ws = windows_with_targets_in(&s, 5, 3, "f0", 20..30, 0).unwrap();
        assert!(ws.iter().all(|w| w.target_range().start >= 20 && w.target_range().end <= 30));
        assert_eq!(ws.len(), 8);
        assert_eq!(ws[0].start, 15);
    }

    #[test]
    fn batch_sizes_and_determinism() {
        let plan = plan_batches(6, 4, 7).unwrap();
        assert_eq!(plan.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 2]);
        assert_eq!(plan, plan_batches(6, 4, 7).unwrap());
        let s = series(25, 1);
        let ws = make_windows(&s, 10, 10, "f0").unwrap();
        let batches = assemble_batches(&s, &ws, 1, 3).unwrap();
        assert_eq!(batches.len(), 6);
        let mut got: Vec<_> = batches.iter().map(|b| b.anchors[0]).collect();
        let mut want: Vec<_> = ws.iter().map(|w| w.anchor_time).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    fn raw_of(values: &[f64]) -> RawBatch {
        let block = Array5::from_shape_vec((1, values.len(), 1, 1, 1), values.to_vec()).unwrap();
        RawBatch {
            block,
            t_in: 1,
            target_feature: 0,
            feature_names: vec!["x".into()],
            starts: vec![0],
            anchors: vec![Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()],
        }
    }

    #[test]
    fn min_max_affine_map() {
        let b = normalize_batch(&raw_of(&[2.0, 4.0, 6.0]));
        assert_eq!(b.inputs[[0, 0, 0, 0, 0]], 0.0);
        assert_eq!(b.targets[[0, 0, 0, 0]], 0.5);
        assert_eq!(b.targets[[0, 1, 0, 0]], 1.0);
        let unit = normalize_batch(&raw_of(&[0.0, 0.25, 1.0]));
        assert_eq!(unit.targets[[0, 0, 0, 0]], 0.25);
    }

    #[test]
    fn constant_feature_is_flagged() {
        let b = normalize_batch(&raw_of(&[7.0, 7.0, 7.0]));
        assert!(b.norm.degenerate[0]);
        assert!(b.inputs.iter().chain(b.targets.iter()).all(|&v| v == 0.0));
        let err = denormalize(&b.targets.clone().into_dyn(), &b.norm, "x");
        assert!(matches!(err, Err(Error::Denormalize(_))));
    }

    #[test]
    fn denormalize_inverts() {
        let b = normalize_batch(&raw_of(&[2.0, 4.0, 6.0]));
        let back = denormalize(&b.targets.clone().into_dyn(), &b.norm, "x").unwrap();
        assert_eq!(back.iter().copied().collect::<Vec<_>>(), vec![4.0, 6.0]);
        let zero = denormalize(&ArrayD::zeros(ndarray::IxDyn(&[1])), &b.norm, "x").unwrap();
        assert_eq!(zero[[0]], 2.0);
    }

    #[test]
    fn lazy_source_matches_eager() {
        let s = series(30, 2);
        let ws = make_windows(&s, 4, 2, "f0").unwrap();
        let eager = assemble_batches(&s, &ws, 5, 11).unwrap();
        let src = WindowBatches {
            series: &s,
            windows: ws,
            batch_size: 5,
            seed: 11,
            reshuffle: false,
        };
        let plan = src.epoch_plan(3).unwrap();
        for (members, e) in plan.iter().zip(&eager) {
            let b = src.load(members).unwrap();
            assert_eq!(b.inputs, e.inputs);
            assert_eq!(b.targets, e.targets);
        }
    }
}
