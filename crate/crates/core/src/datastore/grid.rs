//! Dense gridded series and the portable binary container.
//!
//! Portable layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "FCGRID\0\x01"
//! T d M N    4 × u32
//! start      i64       unix seconds, UTC
//! step       i64       seconds
//! features   d × { u16 len, utf-8 name, u16 len, utf-8 units }
//! latitude   M·N × f64 row-major
//! longitude  M·N × f64 row-major
//! body       T·d·M·N × f32, time-major ([t][feature][row][col])
//! ```

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 8] = b"FCGRID\0\x01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub units: String,
}

impl FeatureInfo {
    pub fn new(name: impl Into<String>, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
        }
    }
}

/// A `[time, feature, row, col]` field on a regular lat/lon grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    values: Array4<f32>,
    features: Vec<FeatureInfo>,
    lat: Array2<f64>,
    lon: Array2<f64>,
    start_time: DateTime<Utc>,
    step: TimeDelta,
}

fn strictly_monotone<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    let Some(mut prev) = it.next().copied() else {
        return true;
    };
    let mut dir = 0i8;
    for &v in it {
        let d = if v > prev {
            1
        } else if v < prev {
            -1
        } else {
            return false;
        };
        if dir != 0 && d != dir {
            return false;
        }
        dir = d;
        prev = v;
    }
    true
}

impl GridSeries {
    pub fn new(
        values: Array4<f32>,
        features: Vec<FeatureInfo>,
        lat: Array2<f64>,
        lon: Array2<f64>,
        start_time: DateTime<Utc>,
        step: TimeDelta,
    ) -> Result<Self> {
        let (t, d, m, n) = values.dim();
        if t < 1 || d < 1 {
            return Err(Error::Ingest(format!(
                "grid needs at least one timestep and one feature, got T={t}, d={d}"
            )));
        }
        if m < 3 || n < 3 {
            return Err(Error::Ingest(format!(
                "grid must be at least 3x3, got {m}x{n}"
            )));
        }
        if features.len() != d {
            return Err(Error::Schema(format!(
                "{} feature descriptors for {d} features",
                features.len()
            )));
        }
        if lat.dim() != (m, n) || lon.dim() != (m, n) {
            return Err(Error::Ingest(format!(
                "coordinate grids {:?}/{:?} do not match {m}x{n}",
                lat.dim(),
                lon.dim()
            )));
        }
        if !lat.columns().into_iter().all(|c| strictly_monotone(c.iter())) {
            return Err(Error::Ingest(
                "latitude is not strictly monotone along rows".into(),
            ));
        }
        if !lon.rows().into_iter().all(|r| strictly_monotone(r.iter())) {
            return Err(Error::Ingest(
                "longitude is not strictly monotone along columns".into(),
            ));
        }
        if step <= TimeDelta::zero() {
            return Err(Error::Ingest(format!("time step must be positive, got {step}")));
        }
        if let Some((idx, _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Ingest(format!(
                "non-finite value at (t={}, feature={}, row={}, col={})",
                idx.0, idx.1, idx.2, idx.3
            )));
        }
        Ok(Self {
            values,
            features,
            lat,
            lon,
            start_time,
            step,
        })
    }

    /// Builds a regular grid from 1-d latitude and longitude axes.
    pub fn from_axes(
        values: Array4<f32>,
        features: Vec<FeatureInfo>,
        lat_axis: &[f64],
        lon_axis: &[f64],
        start_time: DateTime<Utc>,
        step: TimeDelta,
    ) -> Result<Self> {
        let (lat, lon) = mesh(lat_axis, lon_axis);
        Self::new(values, features, lat, lon, start_time, step)
    }

    pub fn values(&self) -> &Array4<f32> {
        &self.values
    }

    pub fn features(&self) -> &[FeatureInfo] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}`")))
    }

    pub fn lat(&self) -> &Array2<f64> {
        &self.lat
    }

    pub fn lon(&self) -> &Array2<f64> {
        &self.lon
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

    pub fn height(&self) -> usize {
        self.values.dim().2
    }

    pub fn width(&self) -> usize {
        self.values.dim().3
    }

    pub fn time_at(&self, t: usize) -> DateTime<Utc> {
        self.start_time + self.step * t as i32
    }

    /// End of the covered span (exclusive): `start + T·step`.
    pub fn end_time(&self) -> DateTime<Utc> {
        self.time_at(self.len_time())
    }

    pub fn frame(&self, t: usize, feature: usize) -> ArrayView2<'_, f32> {
        self.values
            .slice(ndarray::s![t, feature, .., ..])
    }

    /// Time slice `[start, end)` sharing metadata.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len_time() {
            return Err(Error::Index(format!(
                "time slice {start}..{end} outside 0..{}",
                self.len_time()
            )));
        }
        Ok(Self {
            values: self.values.slice(ndarray::s![start..end, .., .., ..]).to_owned(),
            features: self.features.clone(),
            lat: self.lat.clone(),
            lon: self.lon.clone(),
            start_time: self.time_at(start),
            step: self.step,
        })
    }

    /// Keeps only the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.feature_index(n))
            .collect::<Result<_>>()?;
        let (t, _, m, n) = self.values.dim();
        let mut values = Array4::<f32>::zeros((t, idx.len(), m, n));
        for (dst, &src) in idx.iter().enumerate() {
            values
                .slice_mut(ndarray::s![.., dst, .., ..])
                .assign(&self.values.slice(ndarray::s![.., src, .., ..]));
        }
        Ok(Self {
            values,
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            lat: self.lat.clone(),
            lon: self.lon.clone(),
            start_time: self.start_time,
            step: self.step,
        })
    }

    pub fn write_portable(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.encode(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn encode(&self, w: &mut impl Write) -> std::io::Result<()> {
        let (t, d, m, n) = self.values.dim();
        w.write_all(GRID_MAGIC)?;
        for v in [t, d, m, n] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.start_time.timestamp().to_le_bytes())?;
        w.write_all(&self.step.num_seconds().to_le_bytes())?;
        for f in &self.features {
            write_str(w, &f.name)?;
            write_str(w, &f.units)?;
        }
        for v in self.lat.iter().chain(self.lon.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_portable(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let bad = |what: &str| Error::Ingest(format!("truncated grid file ({what})"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("magic"))?;
        if &magic != GRID_MAGIC {
            return Err(Error::Ingest("not a portable grid file (bad magic)".into()));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = read_u32(&mut r).ok_or_else(|| bad("dims"))? as usize;
        }
        let [t, d, m, n] = dims;
        let start = read_i64(&mut r).ok_or_else(|| bad("start"))?;
        let step = read_i64(&mut r).ok_or_else(|| bad("step"))?;
        let mut features = Vec::with_capacity(d);
        for _ in 0..d {
            let name = read_str(&mut r).ok_or_else(|| bad("feature table"))?;
            let units = read_str(&mut r).ok_or_else(|| bad("feature table"))?;
            features.push(FeatureInfo { name, units });
        }
        let coords = m * n;
        let mut lat = Vec::with_capacity(coords);
        let mut lon = Vec::with_capacity(coords);
        for i in 0..2 * coords {
            let v = read_f64(&mut r).ok_or_else(|| bad("coordinates"))?;
            if i < coords {
                lat.push(v)
            } else {
                lon.push(v)
            }
        }
        let count = t * d * m * n;
        if r.len() != count * 4 {
            return Err(Error::Ingest(format!(
                "grid body has {} bytes, expected {}",
                r.len(),
                count * 4
            )));
        }
        let values: Vec<f32> = r
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let start = DateTime::from_timestamp(start, 0)
            .ok_or_else(|| Error::Ingest(format!("start timestamp {start} out of range")))?;
        Self::new(
            Array4::from_shape_vec((t, d, m, n), values).map_err(|e| Error::Ingest(e.to_string()))?,
            features,
            Array2::from_shape_vec((m, n), lat).map_err(|e| Error::Ingest(e.to_string()))?,
            Array2::from_shape_vec((m, n), lon).map_err(|e| Error::Ingest(e.to_string()))?,
            start,
            TimeDelta::seconds(step),
        )
    }
}

/// Expands 1-d axes into `[M, N]` latitude and longitude grids.
pub fn mesh(lat_axis: &[f64], lon_axis: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = (lat_axis.len(), lon_axis.len());
    let lat = Array2::from_shape_fn((m, n), |(i, _)| lat_axis[i]);
    let lon = Array2::from_shape_fn((m, n), |(_, j)| lon_axis[j]);
    (lat, lon)
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "string too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    if r.len() < n {
        return None;
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Some(head)
}

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    take(r, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

fn read_i64(r: &mut &[u8]) -> Option<i64> {
    take(r, 8).map(|b| i64::from_le_bytes(b.try_into().unwrap()))
}

fn read_f64(r: &mut &[u8]) -> Option<f64> {
    take(r, 8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
}

fn read_str(r: &mut &[u8]) -> Option<String> {
    let len = take(r, 2).map(|b| u16::from_le_bytes([b[0], b[1]]))? as usize;
    take(r, len).and_then(|b| String::from_utf8(b.to_vec()).ok())
}
