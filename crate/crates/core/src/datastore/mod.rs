//! Data ingestion, windowing, normalization and experiment splits.

pub mod cf;
pub mod eda;
pub mod grid;
pub mod splits;
pub mod stations;
pub mod synth;
pub mod windows;

use std::io::Read;
use std::path::Path;

pub use cf::{FeatureSpec, GridSchema};
pub use eda::{compute_correlation, shifted_trend, CorrelationReport};
pub use grid::{FeatureInfo, GridSeries};
pub use splits::{rolling_splits, rolling_splits_indexed, ExperimentWindow, Fractions, Period};
pub use stations::{ingest_stations, GapReport, StationSeries};
pub use synth::{synth_advection, synth_from_config, Blob, SynthConfig};
pub use windows::{
    assemble_batches, denormalize, inference_batch, make_windows, normalize_batch, plan_batches,
    windows_with_targets_in, Batch, BatchSource, NormalizationRecord, RawBatch, SampleWindow,
    WindowBatches,
};

use crate::error::{Error, Result};

/// Reads a grid file, dispatching on its leading bytes: the portable
/// container or a NetCDF-3 file. The portable container carries its own
/// feature table, which is then restricted and reordered to the schema.
pub fn ingest_grid(path: &Path, schema: &GridSchema) -> Result<GridSeries> {
    let mut magic = [0u8; 8];
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let got = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
    if got == 8 && &magic == grid::GRID_MAGIC {
        let series = GridSeries::read_portable(path)?;
        return series.select_features(&schema.feature_names());
    }
    if got >= 4 && &magic[..3] == b"CDF" {
        return cf::read_netcdf(path, schema);
    }
    Err(Error::Ingest(format!(
        "{}: unrecognised grid format (expected NetCDF-3 or the portable container)",
        path.display()
    )))
}
