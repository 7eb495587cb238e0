//! Rolling train/validation/test experiment windows.

use std::ops::Range;

use chrono::{DateTime, Months, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl Fractions {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!(
                "fractions must be nonnegative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Splits `n` steps: validation and test sizes are floored, the
    /// remainder goes to training.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
        let (val, test) = (floor(self.val), floor(self.test));
        (n - val - test, val, test)
    }
}

/// Half-open time ranges `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// One experiment: chronological, contiguous, disjoint index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentWindow {
    pub experiment_id: usize,
    pub train_range: Range<usize>,
    pub val_range: Range<usize>,
    pub test_range: Range<usize>,
    /// Calendar extent, when the split was built from dates.
    pub period: Option<Period>,
}

impl ExperimentWindow {
    pub fn span(&self) -> Range<usize> {
        self.train_range.start..self.test_range.end
    }

    fn from_span(experiment_id: usize, start: usize, len: usize, fr: &Fractions) -> Self {
        let (train, val, test) = fr.sizes(len);
        let a = start + train;
        let b = a + val;
        Self {
            experiment_id,
            train_range: start..a,
            val_range: a..b,
            test_range: b..b + test,
            period: None,
        }
    }
}

/// Index-based windows of `window` steps every `stride` steps over a
/// series of `len` steps.
pub fn rolling_splits_indexed(
    len: usize,
    window: usize,
    stride: usize,
    fractions: Fractions,
) -> Result<Vec<ExperimentWindow>> {
    fractions.validate()?;
    if window == 0 || stride == 0 {
        return Err(Error::Split("window and stride must be positive".into()));
    }
    if len < window {
        return Err(Error::Split(format!(
            "span of {len} steps is shorter than the {window}-step window"
        )));
    }
    Ok((0..)
        .map(|i| i * stride)
        .take_while(|s| s + window <= len)
        .enumerate()
        .map(|(id, s)| ExperimentWindow::from_span(id, s, window, &fractions))
        .collect())
}

/// Calendar windows of `window_months` every `stride_months` over
/// `[span.start, span.end)`, mapped onto a series starting at `span.start`
/// with the given step.
pub fn rolling_splits(
    span: Period,
    step: TimeDelta,
    window_months: u32,
    stride_months: u32,
    fractions: Fractions,
) -> Result<Vec<ExperimentWindow>> {
    fractions.validate()?;
    if window_months == 0 || stride_months == 0 || step <= TimeDelta::zero() {
        return Err(Error::Split(
            "window, stride and step must be positive".into(),
        ));
    }
    let add = |t: DateTime<Utc>, months: u32| {
        t.checked_add_months(Months::new(months))
            .ok_or_else(|| Error::Split("date overflow".into()))
    };
    if add(span.start, window_months)? > span.end {
        return Err(Error::Split(format!(
            "span {} .. {} is shorter than the {window_months}-month window",
            span.start, span.end
        )));
    }
    let index = |t: DateTime<Utc>| -> usize {
        ((t - span.start).num_milliseconds() / step.num_milliseconds()) as usize
    };
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let start = add(span.start, i * stride_months)?;
        let end = add(start, window_months)?;
        if end > span.end {
            break;
        }
        let (a, b) = (index(start), index(end));
        let mut w = ExperimentWindow::from_span(i as usize, a, b - a, &fractions);
        w.period = Some(Period { start, end });
        out.push(w);
        i += 1;
    }
    Ok(out)
}
