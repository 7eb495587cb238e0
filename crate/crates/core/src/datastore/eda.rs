//! Exploratory statistics: feature correlations and lagged trends.

use ndarray::Array2;
use super::grid::GridSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// Mean over cells of the per-cell Pearson matrices, `[d, d]`.
    pub matrix: Array2<f64>,
    /// Number of (cell, feature) pairs whose series had zero variance;
    /// their off-diagonal entries contributed 0.
    pub zero_variance: usize,
}

/// Pearson correlation of two equally long series, `None` when either is
/// constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn compute_correlation(series: &GridSeries) -> Result<CorrelationReport> {
    let (t, d, m, n) = series.values().dim();
    if t < 2 {
        return Err(Error::Domain("correlation needs at least 2 timesteps".into()));
    }
    let mut sum = Array2::<f64>::zeros((d, d));
    let mut zero_variance = 0;
    let v = series.values();
    for i in 0..m {
        for j in 0..n {
            let cols: Vec<Vec<f64>> = (0..d)
                .map(|k| (0..t).map(|ti| f64::from(v[[ti, k, i, j]])).collect())
                .collect();
            zero_variance += cols
                .iter()
                .filter(|c| c.iter().all(|&x| x == c[0]))
                .count();
            for a in 0..d {
                sum[[a, a]] += 1.0;
                for b in a + 1..d {
                    let r = pearson(&cols[a], &cols[b]).unwrap_or(0.0);
                    sum[[a, b]] += r;
                    sum[[b, a]] += r;
                }
            }
        }
    }
    Ok(CorrelationReport {
        matrix: sum / (m * n) as f64,
        zero_variance,
    })
}

/// `(x_t, x_{t-lag})` for `t = lag..T` at one cell.
pub fn shifted_trend(
    series: &GridSeries,
    cell: (usize, usize),
    feature: &str,
    lag: usize,
) -> Result<Vec<(f64, f64)>> {
    let k = series.feature_index(feature)?;
    let (t, _, m, n) = series.values().dim();
    if cell.0 >= m || cell.1 >= n {
        return Err(Error::Index(format!(
            "cell {cell:?} outside the {m}x{n} grid"
        )));
    }
    if lag == 0 || lag >= t {
        return Err(Error::Index(format!(
            "lag must be in 1..{t}, got {lag}"
        )));
    }
    let v = series.values();
    Ok((lag..t)
        .map(|ti| {
            (
                f64::from(v[[ti, k, cell.0, cell.1]]),
                f64::from(v[[ti - lag, k, cell.0, cell.1]]),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::grid::FeatureInfo;
    use chrono::{TimeDelta, TimeZone, Utc};
    use ndarray::Array4;

    fn grid(values: Array4<f32>) -> GridSeries {
        let d = values.dim().1;
        let (m, n) = (values.dim().2, values.dim().3);
        let feats = (0..d).map(|k| FeatureInfo::new(format!("f{k}"), "")).collect::<Vec<_>>();
        let lat: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let lon: Vec<f64> = (0..n).map(|i| i as f64).collect();
        GridSeries::from_axes(
            values,
            feats,
            &lat,
            &lon,
            Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap(),
            TimeDelta::hours(3),
        )
        .unwrap()
    }

    #[test]
    fn duplicated_and_negated_features() {
        let v = Array4::from_shape_fn((6, 3, 3, 3), |(t, k, i, j)| {
            let base = ((t * 7 + i * 3 + j) % 5) as f32 + t as f32;
            match k {
                0 | 1 => base,
                _ => -base,
            }
        });
        let r = compute_correlation(&grid(v)).unwrap();
        assert!((r.matrix[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((r.matrix[[0, 2]] + 1.0).abs() < 1e-12);
        assert_eq!(r.matrix[[1, 1]], 1.0);
        assert_eq!(r.matrix, r.matrix.t());
    }

    #[test]
    fn pearson_hand_value() {
        // x = (1,2,3), y = (1,3,2): sxy = 1, sxx = syy = 2 -> 0.5
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn zero_variance_counted() {
        let v = Array4::from_shape_fn((4, 2, 3, 3), |(t, k, _, _)| if k == 0 { t as f32 } else { 1.0 });
        let r = compute_correlation(&grid(v)).unwrap();
        assert_eq!(r.zero_variance, 9);
        assert_eq!(r.matrix[[0, 1]], 0.0);
        assert_eq!(r.matrix[[1, 1]], 1.0);
    }

    #[test]
    fn trend_pairs() {
        let v = Array4::from_shape_fn((3, 1, 3, 3), |(t, _, _, _)| (t + 1) as f32);
        let g = grid(v);
        assert_eq!(shifted_trend(&g, (0, 0), "f0", 1).unwrap(), vec![(2.0, 1.0), (3.0, 2.0)]);
        assert!(matches!(shifted_trend(&g, (0, 0), "f0", 3), Err(Error::Index(_))));
        assert!(matches!(shifted_trend(&g, (3, 0), "f0", 1), Err(Error::Index(_))));
    }
}
