use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use forecast_core::datastore::{compute_correlation, ingest_stations, shifted_trend, GridSeries, StationSeries};
use forecast_core::flowfield::{flow_sequence, perturbation_diagnostic, quiver_samples};
use forecast_core::interpolate::interpolate_series;

use super::{figures, load_series, read_grid, RunDir, Table};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{self, Scale};

fn grid_summary(s: &GridSeries) -> serde_json::Value {
    json!({
        "height": s.height(),
        "width": s.width(),
        "len_time": s.len_time(),
        "features": s.feature_names(),
        "start": s.start_time().to_rfc3339(),
        "end": s.end_time().to_rfc3339(),
        "step_seconds": s.step().num_seconds(),
    })
}

fn read_stations(cfg: &RunConfig) -> CliResult<Option<(StationSeries, Vec<(usize, String)>)>> {
    let Some(path) = &cfg.data.stations else {
        return Ok(None);
    };
    let step = cfg
        .data
        .station_step_hours
        .map(|h| chrono::TimeDelta::seconds((h * 3600.0).round() as i64));
    let (series, gaps) = ingest_stations(path, step)?;
    Ok(Some((series, gaps.missing)))
}

/// Validates the inputs and stores the grid in the portable container.
pub fn ingest(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let mut report = serde_json::Map::new();
    if cfg.data.grid.is_some() || cfg.synthetic.is_some() {
        let series = load_series(cfg)?;
        series.write_portable(&dir.file("grid.fcg"))?;
        report.insert("grid".into(), grid_summary(&series));
    }
    if let Some((stations, missing)) = read_stations(cfg)? {
        let mut gaps = Table::new(&["t", "station_id"]);
        for (t, id) in &missing {
            gaps.push(vec![t.to_string(), id.clone()]);
        }
        dir.write("station_gaps.csv", &gaps.to_csv())?;
        report.insert(
            "stations".into(),
            json!({
                "stations": stations.num_stations(),
                "len_time": stations.len_time(),
                "features": stations.feature_names(),
                "step_seconds": stations.step().num_seconds(),
                "missing": missing.len(),
            }),
        );
    }
    if report.is_empty() {
        return Err(CliError::config("nothing to ingest: set data.grid, data.stations or [synthetic]"));
    }
    dir.write_json("ingest.json", &report)
}

/// Station observations onto the template grid.
pub fn interpolate(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let (stations, _) = read_stations(cfg)?.ok_or_else(|| CliError::config("data.stations is not set"))?;
    let template_path = cfg
        .data
        .template
        .as_ref()
        .or(cfg.data.grid.as_ref())
        .ok_or_else(|| CliError::config("set data.template (or data.grid) for the target grid"))?;
    let template = read_grid(template_path, cfg.data.schema.as_ref())?;
    let (grid, powers) = interpolate_series(&stations, &template, &cfg.interpolate.candidates)?;
    grid.write_portable(&dir.file("interpolated.fcg"))?;
    powers.write_csv(&dir.file("powers.csv"), stations.feature_names())?;
    if cfg.plot.enabled {
        let frames: Vec<Vec<Array2<f64>>> = (0..grid.num_features())
            .map(|k| {
                (0..grid.len_time().min(4))
                    .map(|t| grid.frame(t, k).mapv(f64::from))
                    .collect()
            })
            .collect();
        for (k, row) in frames.iter().enumerate() {
            let scale = Scale::shared(row.iter().map(|f| f.view()));
            let img = plot::strip(std::slice::from_ref(row), &scale, cfg.plot.cell_px);
            plot::save(&img, &dir.file(&format!("interpolated_{}.png", grid.feature_names()[k])))?;
        }
    }
    dir.write_json("interpolate.json", &grid_summary(&grid))
}

fn feature_or_target<'a>(cfg: &'a RunConfig, f: &'a Option<String>) -> &'a str {
    f.as_deref().unwrap_or(&cfg.data.target)
}

/// Feature correlations and lagged trends at one cell.
pub fn eda(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let series = load_series(cfg)?;
    let names = series.feature_names();
    let report = compute_correlation(&series)?;
    let mut header = vec!["feature"];
    header.extend(names.iter().map(String::as_str));
    let mut corr = Table::new(&header);
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(report.matrix.row(i).iter().map(|v| v.to_string()));
        corr.push(row);
    }
    dir.write("correlation.csv", &corr.to_csv())?;

    let feature = feature_or_target(cfg, &cfg.eda.feature);
    let cell = cfg
        .eda
        .cell
        .map(|[r, c]| (r, c))
        .unwrap_or((series.height() / 2, series.width() / 2));
    let mut lags = Vec::new();
    for &lag in &cfg.eda.lags {
        let pairs = shifted_trend(&series, cell, feature, lag)?;
        let mut t = Table::new(&["t", "value", "lagged"]);
        for (i, (x, y)) in pairs.iter().enumerate() {
            t.push(vec![(i + lag).to_string(), x.to_string(), y.to_string()]);
        }
        let name = format!("trend_lag{lag}.csv");
        dir.write(&name, &t.to_csv())?;
        lags.push(lag);
        if cfg.plot.enabled {
            figures::trend(&dir.file(&name), &dir.file(&format!("trend_lag{lag}.png")))?;
        }
    }
    if cfg.plot.enabled {
        figures::correlation(&dir.file("correlation.csv"), &dir.file("correlation.png"), cfg.plot.cell_px)?;
    }
    dir.write_json(
        "eda.json",
        &json!({
            "features": names,
            "zero_variance": report.zero_variance,
            "cell": [cell.0, cell.1],
            "feature": feature,
            "lags": lags,
        }),
    )
}

/// Flow fields of consecutive frames and their response to identity,
/// scaling and sign-flip transforms.
pub fn flow(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let series = load_series(cfg)?;
    let f = &cfg.flow;
    let k = series.feature_index(feature_or_target(cfg, &f.feature))?;
    let end = (f.start + f.transitions + 1).min(series.len_time());
    if end < f.start + 2 {
        return Err(CliError::data(format!(
            "flow needs two frames from t = {}, series has {}",
            f.start,
            series.len_time()
        )));
    }
    let (m, n) = (series.height(), series.width());
    let x = Array3::from_shape_fn((end - f.start, m, n), |(t, i, j)| {
        f64::from(series.values()[[f.start + t, k, i, j]])
    });
    let flows = flow_sequence(x.view())?;
    for (t, fm) in flows.iter().enumerate() {
        let mut tab = Table::new(&["row", "col", "vertical", "horizontal"]);
        for (r, c, v, h) in quiver_samples(fm, 1) {
            tab.push(vec![r.to_string(), c.to_string(), v.to_string(), h.to_string()]);
        }
        dir.write(&format!("flow_{t:03}.csv"), &tab.to_csv())?;
        if cfg.plot.enabled {
            let frame = x.index_axis(ndarray::Axis(0), t + 1);
            let img = plot::quiver(frame, &quiver_samples(fm, cfg.plot.quiver_step), cfg.plot.quiver_step, cfg.plot.cell_px.max(8));
            plot::save(&img, &dir.file(&format!("flow_{t:03}.png")))?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(f.sign_seed);
    let signs = Array2::from_shape_simple_fn((m, n), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let scale = f.scale;
    let identity = perturbation_diagnostic(x.view(), |v| v.to_owned())?;
    let scaled = perturbation_diagnostic(x.view(), |v| v.mapv(|a| a * scale))?;
    let flipped = perturbation_diagnostic(x.view(), |v| &v * &signs)?;
    let mut stats = Table::new(&["transform", "mean_angle_deg", "mean_magnitude_ratio", "cells"]);
    for (name, s) in [("identity", identity), ("scale", scaled), ("sign_flip", flipped)] {
        stats.push(vec![
            name.into(),
            s.mean_angle_deg.to_string(),
            s.mean_magnitude_ratio.to_string(),
            s.cells.to_string(),
        ]);
    }
    dir.write("flow_stats.csv", &stats.to_csv())
}
