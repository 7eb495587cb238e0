//! Subcommand implementations. Each writes only under its run directory.

mod data;
pub mod figures;
mod model;

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use forecast_core::datastore::grid::GRID_MAGIC;
use forecast_core::datastore::{
    ingest_grid, rolling_splits, rolling_splits_indexed, synth_from_config, ExperimentWindow, GridSchema,
    GridSeries, Period,
};

pub use data::{eda, flow, ingest, interpolate};
pub use model::{evaluate, predict, train};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Source revision baked in at build time.
pub const REVISION: &str = env!("FORECAST_REVISION");

/// Output directory of one command, created with the effective config and
/// the revision string already in place.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(cfg: &RunConfig) -> CliResult<Self> {
        let path = cfg.out_dir.clone();
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        let dir = Self { path };
        dir.write("config.toml", &cfg.to_toml())?;
        dir.write(
            "REVISION",
            &format!("forecast {} {REVISION}\n", env!("CARGO_PKG_VERSION")),
        )?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.file(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

fn is_portable(path: &Path) -> CliResult<bool> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut magic = [0u8; 8];
    let got = f.read(&mut magic).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(got == 8 && &magic == GRID_MAGIC)
}

/// Reads a grid file: every feature of a portable file unless a schema
/// is configured, the reanalysis schema for NetCDF.
pub fn read_grid(path: &Path, schema: Option<&GridSchema>) -> CliResult<GridSeries> {
    Ok(match schema {
        Some(s) => ingest_grid(path, s)?,
        None if is_portable(path)? => GridSeries::read_portable(path)?,
        None => ingest_grid(path, &GridSchema::era5())?,
    })
}

/// The configured grid, or the synthetic generator when no file is set.
pub fn load_series(cfg: &RunConfig) -> CliResult<GridSeries> {
    if let Some(path) = &cfg.data.grid {
        return read_grid(path, cfg.data.schema.as_ref());
    }
    if let Some(syn) = &cfg.synthetic {
        return Ok(synth_from_config(&syn.to_synth())?);
    }
    Err(CliError::config("no data: set data.grid or a [synthetic] section"))
}

pub fn experiment_windows(cfg: &RunConfig, series: &GridSeries) -> CliResult<Vec<ExperimentWindow>> {
    let s = &cfg.splits;
    let mut windows = match s.window_steps {
        Some(w) => rolling_splits_indexed(series.len_time(), w, s.stride_steps.unwrap_or(w), s.fractions)?,
        None => rolling_splits(
            Period {
                start: series.start_time(),
                end: series.end_time(),
            },
            series.step(),
            s.window_months,
            s.stride_months,
            s.fractions,
        )?,
    };
    if let Some(k) = s.max_experiments {
        windows.truncate(k);
    }
    Ok(windows)
}

/// A small CSV table as strings.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CliError::data(format!("{} is empty", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { header, rows })
    }

    pub fn index(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("missing column `{name}`")))
    }

    /// Numeric column; empty or unparsable cells become NaN.
    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let i = self.index(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(i).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "".into()]);
        t.push(vec!["2.5".into(), "3".into()]);
        let p = dir.path().join("t.csv");
        std::fs::write(&p, t.to_csv()).unwrap();
        let back = Table::read(&p).unwrap();
        assert_eq!(back.column("a").unwrap(), vec![1.0, 2.5]);
        assert!(back.column("b").unwrap()[0].is_nan());
        assert_eq!(back.index("c").unwrap_err().exit_code(), 3);
    }
}
