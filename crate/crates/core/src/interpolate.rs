//! Station-to-grid inverse distance weighting with leave-one-out power
//! selection per timestep and feature.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array4};
use rayon::prelude::*;

use crate::datastore::{GridSeries, StationSeries};
use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Distances below this are treated as coincident locations.
pub const EXACT_HIT_KM: f64 = 1e-9;
pub const DEFAULT_CANDIDATES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
/// Power used when fewer than two stations make LOOCV undefined.
pub const FALLBACK_POWER: f64 = 2.0;

fn check_coord(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=360.0).contains(&lon) || !lat.is_finite() || !lon.is_finite() {
        return Err(Error::Domain(format!("invalid coordinate ({lat}, {lon})")));
    }
    Ok(())
}

/// Great-circle distance in kilometres between two (lat, lon) points in
/// degrees.
pub fn haversine(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    check_coord(a.0, a.1)?;
    check_coord(b.0, b.1)?;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dphi = p2 - p1;
    let dlambda = (b.1 - a.1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// Cell-to-station distances `[M·N, n]`, cells in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(pub Array2<f64>);

pub fn distance_matrix(stations: &StationSeries, grid: &GridSeries) -> Result<DistanceMatrix> {
    let (m, n) = (grid.height(), grid.width());
    let locs = stations.locations();
    let s = locs.nrows();
    let mut d = Array2::zeros((m * n, s));
    for i in 0..m {
        for j in 0..n {
            let cell = (grid.lat()[[i, j]], grid.lon()[[i, j]]);
            for k in 0..s {
                d[[i * n + j, k]] = haversine(cell, (locs[[k, 0]], locs[[k, 1]]))?;
            }
        }
    }
    Ok(DistanceMatrix(d))
}

/// Pairwise station distances `[n, n]`.
pub fn station_distances(stations: &StationSeries) -> Result<Array2<f64>> {
    let locs = stations.locations();
    let n = locs.nrows();
    let mut d = Array2::zeros((n, n));
    for a in 0..n {
        for b in a + 1..n {
            let v = haversine((locs[[a, 0]], locs[[a, 1]]), (locs[[b, 0]], locs[[b, 1]]))?;
            d[[a, b]] = v;
            d[[b, a]] = v;
        }
    }
    Ok(d)
}

/// Inverse-distance weighted estimate; an exact hit returns that station's
/// value (first index on ties).
pub fn idw(values: &[f64], distances: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Interpolation("no stations to interpolate from".into()));
    }
    if values.len() != distances.len() {
        return Err(Error::Interpolation(format!(
            "{} values for {} distances",
            values.len(),
            distances.len()
        )));
    }
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::Interpolation(format!("power must be positive, got {p}")));
    }
    if let Some(i) = distances.iter().position(|&d| d < EXACT_HIT_KM) {
        return Ok(values[i]);
    }
    // Weights are rescaled by the smallest distance so large powers do not
    // underflow; the ratio is unchanged.
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (&v, &d) in values.iter().zip(distances) {
        let w = (dmin / d).powf(p);
        num += w * v;
        den += w;
    }
    Ok(num / den)
}

/// Picks the candidate power with the smallest leave-one-out squared
/// error, first candidate on ties. `distances` are station-to-station.
pub fn loocv_power(values: &[f64], distances: &Array2<f64>, candidates: &[f64]) -> Result<f64> {
    let n = values.len();
    if candidates.is_empty() {
        return Err(Error::Interpolation("empty candidate set".into()));
    }
    if distances.dim() != (n, n) {
        return Err(Error::Interpolation(format!(
            "distance matrix {:?} does not match {n} stations",
            distances.dim()
        )));
    }
    if n < 2 {
        log::warn!("leave-one-out needs two stations; using power {FALLBACK_POWER}");
        return Ok(FALLBACK_POWER);
    }
    let mut best = (f64::INFINITY, candidates[0]);
    let mut others_v = Vec::with_capacity(n - 1);
    let mut others_d = Vec::with_capacity(n - 1);
    for &p in candidates {
        let mut err = 0.0;
        for i in 0..n {
            others_v.clear();
            others_d.clear();
            for j in (0..n).filter(|&j| j != i) {
                others_v.push(values[j]);
                others_d.push(distances[[i, j]]);
            }
            let e = idw(&others_v, &others_d, p)? - values[i];
            err += e * e;
        }
        let mean = err / n as f64;
        if mean < best.0 {
            best = (mean, p);
        }
    }
    Ok(best.1)
}

/// Selected power per `(t, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix(pub Array2<f64>);

impl PowerMatrix {
    /// Writes `t,feature,power` rows.
    pub fn write_csv(&self, path: &Path, feature_names: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(f, "t,feature,power").map_err(io)?;
        for ((t, k), p) in self.0.indexed_iter() {
            writeln!(f, "{t},{},{p}", feature_names[k]).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Fills the template grid from the stations at every timestep and
/// feature. NaN readings exclude that station from the slice.
pub fn interpolate_series(
    stations: &StationSeries,
    template: &GridSeries,
    candidates: &[f64],
) -> Result<(GridSeries, PowerMatrix)> {
    let (t_len, d, _) = stations.values().dim();
    let (m, n) = (template.height(), template.width());
    let cell_d = distance_matrix(stations, template)?.0;
    let st_d = station_distances(stations)?;
    let vals = stations.values();

    let slices: Vec<(usize, usize)> = (0..t_len).flat_map(|t| (0..d).map(move |k| (t, k))).collect();
    let filled = slices
        .par_iter()
        .map(|&(t, k)| -> Result<(f64, Vec<f64>)> {
            let keep: Vec<usize> = (0..stations.num_stations())
                .filter(|&s| !vals[[t, k, s]].is_nan())
                .collect();
            if keep.is_empty() {
                return Err(Error::Interpolation(format!(
                    "every station is missing `{}` at t={t}",
                    stations.feature_names()[k]
                )));
            }
            let v: Vec<f64> = keep.iter().map(|&s| vals[[t, k, s]]).collect();
            let sd = Array2::from_shape_fn((keep.len(), keep.len()), |(a, b)| st_d[[keep[a], keep[b]]]);
            let p = loocv_power(&v, &sd, candidates)?;
            let mut out = Vec::with_capacity(m * n);
            let mut row = vec![0.0; keep.len()];
            for c in 0..m * n {
                for (r, &s) in row.iter_mut().zip(&keep) {
                    *r = cell_d[[c, s]];
                }
                out.push(idw(&v, &row, p)?);
            }
            Ok((p, out))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = Array4::<f32>::zeros((t_len, d, m, n));
    let mut powers = Array2::zeros((t_len, d));
    for (&(t, k), (p, cells)) in slices.iter().zip(filled) {
        powers[[t, k]] = p;
        for (c, v) in cells.into_iter().enumerate() {
            grid[[t, k, c / n, c % n]] = v as f32;
        }
    }
    let features = stations
        .feature_names()
        .iter()
        .map(|f| {
            let units = template
                .features()
                .iter()
                .find(|g| &g.name == f)
                .map(|g| g.units.clone())
                .unwrap_or_default();
            crate::datastore::FeatureInfo::new(f.clone(), units)
        })
        .collect();
    let series = GridSeries::new(
        grid,
        features,
        template.lat().clone(),
        template.lon().clone(),
        stations.start_time(),
        stations.step(),
    )?;
    Ok((series, PowerMatrix(powers)))
}
