use std::path::Path;

use ndarray::{s, Array4, ArrayD, Axis};
use serde_json::json;

use forecast_core::autograd::Graph;
use forecast_core::checkpoint::load_checkpoint;
use forecast_core::datastore::{denormalize, inference_batch, GridSeries, NormalizationRecord};
use forecast_core::trainer::{
    evaluate as evaluate_on, experiment_loaders, run_experiments, ExperimentPlan, ExperimentResult, SummaryTable,
};

use super::{experiment_windows, figures, load_series, RunDir, Table};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Rolling experiments for every selected model.
pub fn train(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let series = load_series(cfg)?;
    let splits = experiment_windows(cfg, &series)?;
    let kinds = cfg.model_kinds()?;
    let plan = ExperimentPlan {
        series: &series,
        splits: &splits,
        models: &kinds,
        models_cfg: &cfg.nets,
        train_cfg: &cfg.train,
        target: &cfg.data.target,
        out_dir: Some(&dir.path),
    };
    let suite = run_experiments(&plan)?;
    suite.summary.write(&dir.path)?;
    dir.write_json("results.json", &suite.results)?;
    if cfg.plot.enabled {
        for r in suite.results.iter().filter(|r| r.error.is_none()) {
            let stem = format!("exp{:02}_{}_losses", r.experiment_id, r.model);
            figures::losses(&dir.file(&format!("{stem}.csv")), &dir.file(&format!("{stem}.png")))?;
        }
    }
    let failed: Vec<&ExperimentResult> = suite.results.iter().filter(|r| r.error.is_some()).collect();
    if let Some(first) = failed.first() {
        return Err(CliError::runtime(format!(
            "{} of {} experiments failed; experiment {} {}: {}",
            failed.len(),
            suite.results.len(),
            first.experiment_id,
            first.model,
            first.error.as_deref().unwrap_or_default()
        )));
    }
    Ok(())
}

/// Re-scores the checkpoints written by `train` on the configured data.
pub fn evaluate(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let ck_dir = cfg.evaluate.checkpoints.as_deref().unwrap_or(&dir.path);
    let series = load_series(cfg)?;
    let splits = experiment_windows(cfg, &series)?;
    let kinds = cfg.model_kinds()?;
    let plan = ExperimentPlan {
        series: &series,
        splits: &splits,
        models: &kinds,
        models_cfg: &cfg.nets,
        train_cfg: &cfg.train,
        target: &cfg.data.target,
        out_dir: None,
    };
    let mut results = Vec::new();
    for split in &splits {
        for &kind in &kinds {
            let path = ck_dir.join(format!("exp{:02}_{kind}.ckpt", split.experiment_id));
            if !path.exists() {
                log::warn!("no checkpoint {}", path.display());
                continue;
            }
            let scored = load_checkpoint(&path).and_then(|ck| {
                let model = ck.into_model()?;
                let [_, val, test] = experiment_loaders(&plan, split, model.t_in(), model.t_out())?;
                Ok((evaluate_on(model.as_ref(), &val)?, evaluate_on(model.as_ref(), &test)?))
            });
            let (val, test, error) = match scored {
                Ok((v, t)) => (v.mse, Some(t), None),
                Err(e) => (f64::NAN, None, Some(e.to_string())),
            };
            results.push(ExperimentResult {
                experiment_id: split.experiment_id,
                model: kind,
                train_losses: Vec::new(),
                val_losses: Vec::new(),
                best_epoch: 0,
                best_val: val,
                test,
                checkpoint: Some(path),
                error,
            });
        }
    }
    if results.is_empty() {
        return Err(CliError::data(format!("no checkpoints found in {}", ck_dir.display())));
    }
    let summary = SummaryTable::from_results(&splits, &kinds, &results);
    summary.write(&dir.path)?;
    dir.write_json("evaluation.json", &results)?;
    if let Some(r) = results.iter().find(|r| r.error.is_some()) {
        return Err(CliError::runtime(format!(
            "cannot evaluate {}: {}",
            r.checkpoint.as_deref().unwrap_or(Path::new("?")).display(),
            r.error.as_deref().unwrap_or_default()
        )));
    }
    Ok(())
}

fn physical(values: &ArrayD<f64>, norm: &NormalizationRecord, feature: &str) -> CliResult<ArrayD<f64>> {
    let k = norm.feature_names.iter().position(|f| f == feature).unwrap_or(norm.target_feature);
    if norm.degenerate[k] {
        return Ok(values.mapv(|_| norm.min[k]));
    }
    Ok(denormalize(values, norm, feature)?)
}

fn restrict(series: GridSeries, names: &[String]) -> CliResult<GridSeries> {
    if series.feature_names() == names {
        Ok(series)
    } else {
        Ok(series.select_features(names)?)
    }
}

/// Forecast from one input window; compares against the series when the
/// forecast horizon is still inside it.
pub fn predict(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let path = cfg
        .predict
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::config("predict.checkpoint is not set"))?;
    let ck = load_checkpoint(path)?;
    let model = ck.into_model()?;
    let series = restrict(load_series(cfg)?, &ck.meta.feature_names)?;
    let target = ck.meta.target.clone();
    let k = series.feature_index(&target)?;
    let (t_in, len) = (model.t_in(), series.len_time());
    let t_out = cfg.predict.t_out.unwrap_or(model.t_out());
    if t_out != model.t_out() && !model.kind().is_recurrent() {
        return Err(CliError::config(format!(
            "{} predicts exactly {} frames; predict.t_out = {t_out} needs a recurrent model",
            model.kind(),
            model.t_out()
        )));
    }
    if len < t_in {
        return Err(CliError::data(format!("{t_in} input frames needed, series has {len}")));
    }
    let start = cfg.predict.start.unwrap_or(len - t_in);
    let batch = inference_batch(&series, start, t_in, t_out, &target)?;
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch)?;
    let pred = physical(g.value(out.prediction), &batch.norm, &target)?;
    let (m, n) = (series.height(), series.width());
    let pred = pred
        .into_shape_with_order((t_out, m, n))
        .map_err(|e| CliError::runtime(format!("prediction shape: {e}")))?;

    let anchor = series.time_at(start + t_in - 1);
    let step = series.step();
    let mut times = Table::new(&["step", "time", "lead_hours"]);
    for s in 1..=t_out {
        let lead = step * s as i32;
        times.push(vec![
            s.to_string(),
            (anchor + lead).to_rfc3339(),
            (lead.num_seconds() as f64 / 3600.0).to_string(),
        ]);
    }
    dir.write("forecast.csv", &times.to_csv())?;

    let grid = GridSeries::new(
        pred.mapv(|v| v as f32).insert_axis(Axis(1)),
        vec![series.features()[k].clone()],
        series.lat().clone(),
        series.lon().clone(),
        anchor + step,
        step,
    )?;
    grid.write_portable(&dir.file("prediction.fcg"))?;

    let truth_end = start + t_in + t_out;
    let truth: Option<Array4<f64>> = (truth_end <= len).then(|| {
        series
            .values()
            .slice(s![start + t_in..truth_end, k..=k, .., ..])
            .mapv(f64::from)
    });
    let mut frames = Table::new(&["kind", "step", "row", "col", "value"]);
    let mut push = |kind: &str, step: usize, frame: ndarray::ArrayView2<'_, f64>| {
        for ((i, j), v) in frame.indexed_iter() {
            frames.push(vec![kind.into(), step.to_string(), i.to_string(), j.to_string(), v.to_string()]);
        }
    };
    for t in 0..t_in {
        push("input", t, series.frame(start + t, k).mapv(f64::from).view());
    }
    for t in 0..t_out {
        push("prediction", t, pred.index_axis(Axis(0), t));
    }
    if let Some(tr) = &truth {
        for t in 0..t_out {
            push("truth", t, tr.slice(s![t, 0, .., ..]));
        }
    }
    dir.write("prediction.csv", &frames.to_csv())?;

    let has_attention = !out.attention.is_empty();
    if has_attention {
        let names = series.feature_names();
        let mut att = Table::new(&["feature", "input_step", "row", "col", "weight"]);
        for (t, var) in out.attention.iter().enumerate() {
            let w = g.value(*var);
            for ((_, f, i, j), v) in w
                .view()
                .into_dimensionality::<ndarray::Ix4>()
                .map_err(|e| CliError::runtime(format!("attention shape: {e}")))?
                .indexed_iter()
            {
                att.push(vec![names[f].clone(), t.to_string(), i.to_string(), j.to_string(), v.to_string()]);
            }
        }
        dir.write("attention.csv", &att.to_csv())?;
    }
    if cfg.plot.enabled {
        figures::prediction(&dir.file("prediction.csv"), &dir.file("prediction.png"), cfg.plot.cell_px)?;
        if has_attention {
            figures::attention(&dir.file("attention.csv"), &dir.file("attention.png"), cfg.plot.cell_px)?;
        }
    }
    let mse = truth.map(|tr| {
        let d = &tr.index_axis(Axis(1), 0) - &pred;
        d.mapv(|x| x * x).mean().unwrap_or(f64::NAN)
    });
    dir.write_json(
        "predict.json",
        &json!({
            "model": model.kind(),
            "checkpoint": path,
            "target": target,
            "start": start,
            "t_in": t_in,
            "t_out": t_out,
            "anchor": anchor.to_rfc3339(),
            "first_forecast": (anchor + step).to_rfc3339(),
            "last_forecast": (anchor + step * t_out as i32).to_rfc3339(),
            "mse_physical": mse,
        }),
    )
}
