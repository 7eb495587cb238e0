//! Point observations from ground stations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use ndarray::{Array2, Array3};

use super::cf::parse_timestamp;
use crate::error::{Error, Result};

/// `[time, feature, station]` observations; missing readings are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    values: Array3<f64>,
    feature_names: Vec<String>,
    station_ids: Vec<String>,
    locations: Array2<f64>,
    start_time: DateTime<Utc>,
    step: TimeDelta,
}

/// Slots with no observation, as `(t, station_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapReport {
    pub missing: Vec<(usize, String)>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }
}

impl StationSeries {
    pub fn new(
        values: Array3<f64>,
        feature_names: Vec<String>,
        station_ids: Vec<String>,
        locations: Array2<f64>,
        start_time: DateTime<Utc>,
        step: TimeDelta,
    ) -> Result<Self> {
        let (t, d, n) = values.dim();
        if t == 0 || d == 0 || n == 0 {
            return Err(Error::Ingest(format!(
                "station series needs T, d, n >= 1, got ({t}, {d}, {n})"
            )));
        }
        if feature_names.len() != d || station_ids.len() != n || locations.dim() != (n, 2) {
            return Err(Error::Schema(
                "station metadata does not match the value tensor".into(),
            ));
        }
        for (i, row) in locations.rows().into_iter().enumerate() {
            let (lat, lon) = (row[0], row[1]);
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=360.0).contains(&lon) {
                return Err(Error::Ingest(format!(
                    "station `{}` has invalid coordinates ({lat}, {lon})",
                    station_ids[i]
                )));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if locations.row(i) == locations.row(j) {
                    return Err(Error::Ingest(format!(
                        "stations `{}` and `{}` share a location",
                        station_ids[i], station_ids[j]
                    )));
                }
            }
        }
        if step <= TimeDelta::zero() {
            return Err(Error::Ingest("time step must be positive".into()));
        }
        Ok(Self {
            values,
            feature_names,
            station_ids,
            locations,
            start_time,
            step,
        })
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    /// `[n, 2]` as (lat, lon) degrees.
    pub fn locations(&self) -> &Array2<f64> {
        &self.locations
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn step(&self) -> TimeDelta {
        self.step
    }

    pub fn len_time(&self) -> usize {
        self.values.dim().0
    }

    pub fn num_features(&self) -> usize {
        self.values.dim().1
    }

    pub fn num_stations(&self) -> usize {
        self.values.dim().2
    }
}

struct Row {
    station: String,
    lat: f64,
    lon: f64,
    time: DateTime<Utc>,
    values: Vec<f64>,
}

/// Reads `station_id,lat,lon,timestamp,<feature>...`.
///
/// The step is the smallest positive spacing between distinct timestamps
/// unless `step` is given; every timestamp must fall on that grid. Empty
/// cells and absent rows become NaN and are listed in the gap report.
pub fn ingest_stations(
    path: &Path,
    step: Option<TimeDelta>,
) -> Result<(StationSeries, GapReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["station_id", "lat", "lon", "timestamp"];
    if headers.len() < 5 || headers.iter().take(4).ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "station header must start with `{}` followed by feature columns",
            expected.join(",")
        )));
    }
    let features: Vec<String> = headers.iter().skip(4).map(str::to_string).collect();

    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let line = line + 2;
        let rec = rec.map_err(|e| Error::Ingest(format!("line {line}: {e}")))?;
        let coord = |i: usize, what: &str| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                Error::Ingest(format!("line {line}: unparseable {what} `{}`", &rec[i]))
            })
        };
        let lat = coord(1, "latitude")?;
        let lon = coord(2, "longitude")?;
        let time = parse_timestamp(&rec[3])
            .map_err(|e| Error::Ingest(format!("line {line}: {e}")))?;
        let values = (4..rec.len())
            .map(|i| {
                let s = &rec[i];
                if s.is_empty() || s.eq_ignore_ascii_case("nan") {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>().map_err(|_| {
                        Error::Ingest(format!("line {line}: unparseable value `{s}`"))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != features.len() {
            return Err(Error::Ingest(format!("line {line}: wrong number of fields")));
        }
        rows.push(Row {
            station: rec[0].to_string(),
            lat,
            lon,
            time,
            values,
        });
    }
    if rows.is_empty() {
        return Err(Error::Ingest(format!("{}: no observations", path.display())));
    }

    let mut stations: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut seen = HashMap::new();
    for r in &rows {
        match stations.get(&r.station) {
            Some(&(lat, lon)) if (lat, lon) != (r.lat, r.lon) => {
                return Err(Error::Ingest(format!(
                    "station `{}` reported at two locations",
                    r.station
                )))
            }
            Some(_) => {}
            None => {
                stations.insert(r.station.clone(), (r.lat, r.lon));
            }
        }
        if seen.insert((r.station.clone(), r.time), ()).is_some() {
            return Err(Error::Ingest(format!(
                "duplicate row for station `{}` at {}",
                r.station, r.time
            )));
        }
    }

    let times: BTreeSet<DateTime<Utc>> = rows.iter().map(|r| r.time).collect();
    let start = *times.first().expect("nonempty");
    let end = *times.last().expect("nonempty");
    let step = match step {
        Some(s) => s,
        None => times
            .iter()
            .zip(times.iter().skip(1))
            .map(|(a, b)| *b - *a)
            .min()
            .unwrap_or_else(|| TimeDelta::hours(3)),
    };
    if step <= TimeDelta::zero() {
        return Err(Error::Ingest("time step must be positive".into()));
    }
    let step_ms = step.num_milliseconds();
    let slot = |t: DateTime<Utc>| -> Result<usize> {
        let off = (t - start).num_milliseconds();
        if off % step_ms != 0 {
            return Err(Error::Ingest(format!(
                "timestamp {t} is off the {step} grid starting at {start}"
            )));
        }
        Ok((off / step_ms) as usize)
    };
    let t_len = slot(end)? + 1;

    let ids: Vec<String> = stations.keys().cloned().collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut values = Array3::from_elem((t_len, features.len(), ids.len()), f64::NAN);
    let mut present = vec![vec![false; ids.len()]; t_len];
    for r in &rows {
        let t = slot(r.time)?;
        let s = index[r.station.as_str()];
        present[t][s] = true;
        for (k, v) in r.values.iter().enumerate() {
            values[[t, k, s]] = *v;
        }
    }
    let mut gaps = GapReport::default();
    for (t, row) in present.iter().enumerate() {
        for (s, ok) in row.iter().enumerate() {
            let any_nan = (0..features.len()).any(|k| values[[t, k, s]].is_nan());
            if !ok || any_nan {
                gaps.missing.push((t, ids[s].clone()));
            }
        }
    }
    if !gaps.is_empty() {
        log::warn!(
            "{}: {} station/time slots have missing readings",
            path.display(),
            gaps.missing.len()
        );
    }
    let mut locations = Array2::zeros((ids.len(), 2));
    for (i, id) in ids.iter().enumerate() {
        let (lat, lon) = stations[id];
        locations[[i, 0]] = lat;
        locations[[i, 1]] = lon;
    }
    let series = StationSeries::new(values, features, ids, locations, start, step)?;
    Ok((series, gaps))
}

/// Writes a series back to the CSV layout read by [`ingest_stations`];
/// NaN readings are written as empty cells.
pub fn write_stations(series: &StationSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let mut header = vec!["station_id".to_string(), "lat".into(), "lon".into(), "timestamp".into()];
    header.extend(series.feature_names.iter().cloned());
    let werr = |e: csv::Error| Error::Ingest(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(werr)?;
    for t in 0..series.len_time() {
        let ts = (series.start_time + series.step * t as i32).to_rfc3339();
        for (s, id) in series.station_ids.iter().enumerate() {
            let mut rec = vec![
                id.clone(),
                series.locations[[s, 0]].to_string(),
                series.locations[[s, 1]].to_string(),
                ts.clone(),
            ];
            rec.extend((0..series.num_features()).map(|k| {
                let v = series.values[[t, k, s]];
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            }));
            w.write_record(&rec).map_err(werr)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
