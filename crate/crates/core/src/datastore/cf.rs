//! CF-convention NetCDF-3 grids (the classic and 64-bit-offset formats).
//!
//! Data variables are expected as `(time, [singleton dims...], lat, lon)`;
//! packed integers are unpacked with `scale_factor`/`add_offset`, and
//! `_FillValue`/`missing_value` cells are reported as ingest errors.

use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta, Utc};
use ndarray::Array4;
use netcdf3::{DataSet, DataType, DataVector, FileReader, FileWriter, Version};
use serde::{Deserialize, Serialize};

use super::grid::{FeatureInfo, GridSeries};
use crate::error::{Error, Result};

/// One declared feature: its canonical name, the variable holding it and
/// its physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    /// Variable name inside the file; defaults to `name`.
    #[serde(default)]
    pub variable: Option<String>,
    #[serde(default)]
    pub units: Option<String>,
}

impl FeatureSpec {
    pub fn new(name: &str, variable: &str, units: &str) -> Self {
        Self {
            name: name.into(),
            variable: Some(variable.into()),
            units: Some(units.into()),
        }
    }

    pub fn variable(&self) -> &str {
        self.variable.as_deref().unwrap_or(&self.name)
    }
}

/// Declares which features to read and how the coordinates are named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSchema {
    pub features: Vec<FeatureSpec>,
    #[serde(default = "default_time_var")]
    pub time_variable: String,
    #[serde(default = "default_lat_var")]
    pub latitude_variable: String,
    #[serde(default = "default_lon_var")]
    pub longitude_variable: String,
    /// Step assumed when a file holds a single timestep.
    #[serde(default = "default_step_hours")]
    pub step_hours: f64,
}

fn default_time_var() -> String {
    "time".into()
}
fn default_lat_var() -> String {
    "latitude".into()
}
fn default_lon_var() -> String {
    "longitude".into()
}
fn default_step_hours() -> f64 {
    3.0
}

impl GridSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Self {
        Self {
            features,
            time_variable: default_time_var(),
            latitude_variable: default_lat_var(),
            longitude_variable: default_lon_var(),
            step_hours: default_step_hours(),
        }
    }

    /// The eight pressure-level reanalysis features with their short
    /// variable names and units.
    pub fn era5() -> Self {
        Self::new(vec![
            FeatureSpec::new("geopotential", "z", "m2 s-2"),
            FeatureSpec::new("potential_vorticity", "pv", "K m2 kg-1 s-1"),
            FeatureSpec::new("relative_humidity", "r", "%"),
            FeatureSpec::new("specific_humidity", "q", "kg kg-1"),
            FeatureSpec::new("temperature", "t", "K"),
            FeatureSpec::new("u_wind", "u", "m s-1"),
            FeatureSpec::new("v_wind", "v", "m s-1"),
            FeatureSpec::new("vertical_velocity", "w", "Pa s-1"),
        ])
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

fn nc_err(path: &Path, e: impl std::fmt::Debug) -> Error {
    Error::Ingest(format!("{}: {e:?}", path.display()))
}

fn as_f64(data: DataVector) -> Vec<f64> {
    match data {
        DataVector::I8(v) => v.into_iter().map(f64::from).collect(),
        DataVector::U8(v) => v.into_iter().map(f64::from).collect(),
        DataVector::I16(v) => v.into_iter().map(f64::from).collect(),
        DataVector::I32(v) => v.into_iter().map(f64::from).collect(),
        DataVector::F32(v) => v.into_iter().map(f64::from).collect(),
        DataVector::F64(v) => v,
    }
}

fn attr_f64(ds: &DataSet, var: &str, name: &str) -> Option<f64> {
    let a = ds.get_var_attr(var, name)?;
    a.get_f64()
        .and_then(|v| v.first().copied())
        .or_else(|| a.get_f32().and_then(|v| v.first().map(|&x| f64::from(x))))
        .or_else(|| a.get_i32().and_then(|v| v.first().map(|&x| f64::from(x))))
        .or_else(|| a.get_i16().and_then(|v| v.first().map(|&x| f64::from(x))))
}

/// Parses CF time units such as `hours since 1900-01-01 00:00:00.0`.
pub fn parse_time_units(units: &str) -> Result<(TimeDelta, DateTime<Utc>)> {
    let (unit, origin) = units
        .split_once(" since ")
        .ok_or_else(|| Error::Ingest(format!("unsupported time units `{units}`")))?;
    let scale = match unit.trim().to_ascii_lowercase().as_str() {
        "seconds" | "second" | "s" => TimeDelta::seconds(1),
        "minutes" | "minute" => TimeDelta::minutes(1),
        "hours" | "hour" | "h" => TimeDelta::hours(1),
        "days" | "day" => TimeDelta::days(1),
        other => return Err(Error::Ingest(format!("unsupported time unit `{other}`"))),
    };
    Ok((scale, parse_timestamp(origin.trim())?))
}

/// Accepts RFC 3339 and the common naive ISO-8601 spellings (taken as UTC).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    const FORMATS: [&str; 5] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%SZ",
    ];
    for f in FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::Ingest(format!("unparseable timestamp `{s}`")))
}

pub fn read_netcdf(path: &Path, schema: &GridSchema) -> Result<GridSeries> {
    let (ds, _) = FileReader::open(path).map_err(|e| nc_err(path, e))?.close();
    let mut reader = FileReader::open(path).map_err(|e| nc_err(path, e))?;

    let coord = |reader: &mut FileReader, name: &str| -> Result<Vec<f64>> {
        if !ds.has_var(name) {
            return Err(Error::Schema(format!("missing coordinate variable `{name}`")));
        }
        reader
            .read_var(name)
            .map(as_f64)
            .map_err(|e| nc_err(path, e))
    };
    let lat = coord(&mut reader, &schema.latitude_variable)?;
    let lon = coord(&mut reader, &schema.longitude_variable)?;
    let raw_time = coord(&mut reader, &schema.time_variable)?;
    let units = ds
        .get_var_attr_as_string(&schema.time_variable, "units")
        .ok_or_else(|| Error::Ingest("time variable has no `units` attribute".into()))?;
    let (scale, origin) = parse_time_units(units.trim_end_matches('\0'))?;
    let times: Vec<DateTime<Utc>> = raw_time
        .iter()
        .map(|&v| origin + TimeDelta::milliseconds((v * scale.num_milliseconds() as f64).round() as i64))
        .collect();
    let step = match times.as_slice() {
        [] => return Err(Error::Ingest("empty time axis".into())),
        [_] => TimeDelta::milliseconds((schema.step_hours * 3_600_000.0).round() as i64),
        [a, b, ..] => *b - *a,
    };
    for (i, w) in times.windows(2).enumerate() {
        if w[1] - w[0] != step {
            return Err(Error::Ingest(format!(
                "irregular time axis: step {} between index {} and {} differs from {}",
                w[1] - w[0],
                i,
                i + 1,
                step
            )));
        }
    }

    let (t, m, n) = (times.len(), lat.len(), lon.len());
    let d = schema.features.len();
    if d == 0 {
        return Err(Error::Schema("schema declares no features".into()));
    }
    let mut values = Array4::<f32>::zeros((t, d, m, n));
    for (k, spec) in schema.features.iter().enumerate() {
        let var = spec.variable();
        let v = ds.get_var(var).ok_or_else(|| {
            Error::Schema(format!(
                "declared feature `{}` (variable `{var}`) not found",
                spec.name
            ))
        })?;
        let expected = t * m * n;
        if v.len() != expected {
            return Err(Error::Schema(format!(
                "variable `{var}` has {} values, expected {expected} for (time, lat, lon) = ({t}, {m}, {n})",
                v.len()
            )));
        }
        let scale = attr_f64(&ds, var, "scale_factor").unwrap_or(1.0);
        let offset = attr_f64(&ds, var, "add_offset").unwrap_or(0.0);
        let fills: Vec<f64> = ["_FillValue", "missing_value"]
            .iter()
            .filter_map(|a| attr_f64(&ds, var, a))
            .collect();
        let raw = as_f64(reader.read_var(var).map_err(|e| nc_err(path, e))?);
        for (idx, r) in raw.into_iter().enumerate() {
            let (ti, rest) = (idx / (m * n), idx % (m * n));
            let (i, j) = (rest / n, rest % n);
            if fills.contains(&r) || !r.is_finite() {
                return Err(Error::Ingest(format!(
                    "missing or NaN cell in `{}` at (t={ti}, row={i}, col={j})",
                    spec.name
                )));
            }
            values[[ti, k, i, j]] = (r * scale + offset) as f32;
        }
    }
    let features = schema
        .features
        .iter()
        .enumerate()
        .map(|(_, spec)| {
            let units = spec
                .units
                .clone()
                .or_else(|| ds.get_var_attr_as_string(spec.variable(), "units"))
                .unwrap_or_default();
            FeatureInfo::new(spec.name.clone(), units)
        })
        .collect();
    GridSeries::from_axes(values, features, &lat, &lon, times[0], step)
}

/// Writes a series as a classic NetCDF-3 file with 1-d coordinate axes,
/// one float variable per feature named after the feature.
pub fn write_netcdf(series: &GridSeries, path: &Path) -> Result<()> {
    let (t, _, m, n) = series.values().dim();
    let werr = |e: netcdf3::WriteError| Error::Ingest(format!("{}: {e:?}", path.display()));
    let derr = |e: netcdf3::InvalidDataSet| Error::Ingest(format!("{}: {e:?}", path.display()));
    let mut ds = DataSet::new();
    ds.set_unlimited_dim("time", t).map_err(derr)?;
    ds.add_fixed_dim("latitude", m).map_err(derr)?;
    ds.add_fixed_dim("longitude", n).map_err(derr)?;
    ds.add_var_f64("time", &["time"]).map_err(derr)?;
    let origin = series.start_time().format("%Y-%m-%d %H:%M:%S").to_string();
    ds.add_var_attr_string("time", "units", format!("hours since {origin}"))
        .map_err(derr)?;
    ds.add_var_f64("latitude", &["latitude"]).map_err(derr)?;
    ds.add_var_f64("longitude", &["longitude"]).map_err(derr)?;
    for f in series.features() {
        ds.add_var_f32(&f.name, &["time", "latitude", "longitude"])
            .map_err(derr)?;
        ds.add_var_attr_string(&f.name, "units", &f.units)
            .map_err(derr)?;
    }
    let step_h = series.step().num_seconds() as f64 / 3600.0;
    let time: Vec<f64> = (0..t).map(|i| i as f64 * step_h).collect();
    let lat: Vec<f64> = series.lat().column(0).to_vec();
    let lon: Vec<f64> = series.lon().row(0).to_vec();

    let mut w = FileWriter::open(path).map_err(werr)?;
    w.set_def(&ds, Version::Classic, 0).map_err(werr)?;
    w.write_var_f64("time", &time).map_err(werr)?;
    w.write_var_f64("latitude", &lat).map_err(werr)?;
    w.write_var_f64("longitude", &lon).map_err(werr)?;
    for (k, f) in series.features().iter().enumerate() {
        let data: Vec<f32> = series
            .values()
            .slice(ndarray::s![.., k, .., ..])
            .iter()
            .copied()
            .collect();
        w.write_var_f32(&f.name, &data).map_err(werr)?;
    }
    w.close().map_err(werr)?;
    let _ = DataType::F32;
    Ok(())
}
