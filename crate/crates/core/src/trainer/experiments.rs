//! Rolling experiments: one fit and one test evaluation per window and model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fit::{evaluate, fit, Metrics, TrainConfig};
use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::datastore::{windows_with_targets_in, ExperimentWindow, GridSeries, Period, WindowBatches};
use crate::error::{Error, Result};
use crate::nets::{build_model, Forecaster, ModelKind, ModelsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment_id: usize,
    pub model: ModelKind,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Test metrics of the best-validation parameters.
    pub test: Option<Metrics>,
    pub checkpoint: Option<PathBuf>,
    /// Set when the experiment failed; the other fields are then empty.
    pub error: Option<String>,
}

impl ExperimentResult {
    fn failed(experiment_id: usize, model: ModelKind, err: &Error) -> Self {
        Self {
            experiment_id,
            model,
            train_losses: Vec::new(),
            val_losses: Vec::new(),
            best_epoch: 0,
            best_val: f64::NAN,
            test: None,
            checkpoint: None,
            error: Some(err.to_string()),
        }
    }

    pub fn test_mse(&self) -> Option<f64> {
        self.test.map(|m| m.mse)
    }

    /// Writes `epoch,train_loss,val_loss`.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| Error::Checkpoint(format!("{}: {e}", path.display()));
        w.write_record(["epoch", "train_loss", "val_loss"]).map_err(io)?;
        for (i, (t, v)) in self.train_losses.iter().zip(&self.val_losses).enumerate() {
            w.write_record([(i + 1).to_string(), format!("{t:e}"), format!("{v:e}")])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything needed to train one model family over rolling windows.
#[derive(Debug, Clone)]
pub struct ExperimentPlan<'a> {
    pub series: &'a GridSeries,
    pub splits: &'a [ExperimentWindow],
    pub models: &'a [ModelKind],
    pub models_cfg: &'a ModelsConfig,
    pub train_cfg: &'a TrainConfig,
    pub target: &'a str,
    /// Checkpoints and loss CSVs go here when set.
    pub out_dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSuite {
    pub results: Vec<ExperimentResult>,
    pub summary: SummaryTable,
}

/// Train, validation and test loaders of one experiment window; only the
/// training loader reshuffles.
pub fn experiment_loaders<'a>(
    plan: &ExperimentPlan<'a>,
    split: &ExperimentWindow,
    t_in: usize,
    t_out: usize,
) -> Result<[WindowBatches<'a>; 3]> {
    let earliest = split.train_range.start;
    let make = |range: std::ops::Range<usize>, seed: u64, reshuffle: bool| -> Result<WindowBatches<'a>> {
        Ok(WindowBatches {
            series: plan.series,
            windows: windows_with_targets_in(plan.series, t_in, t_out, plan.target, range, earliest)?,
            batch_size: plan.train_cfg.batch_size,
            seed,
            reshuffle,
        })
    };
    let seed = plan.train_cfg.seed.wrapping_add(split.experiment_id as u64 * 1000);
    Ok([
        make(split.train_range.clone(), seed, plan.train_cfg.reshuffle)?,
        make(split.val_range.clone(), seed, false)?,
        make(split.test_range.clone(), seed, false)?,
    ])
}

fn run_one(
    plan: &ExperimentPlan<'_>,
    split: &ExperimentWindow,
    model: &mut dyn Forecaster,
) -> Result<ExperimentResult> {
    let [train, val, test] = experiment_loaders(plan, split, model.t_in(), model.t_out())?;
    let fitted = fit(model, &train, &val, plan.train_cfg)?;
    let metrics = evaluate(model, &test)?;
    let mut result = ExperimentResult {
        experiment_id: split.experiment_id,
        model: model.kind(),
        train_losses: fitted.train_losses,
        val_losses: fitted.val_losses,
        best_epoch: fitted.best_epoch,
        best_val: fitted.best_val,
        test: Some(metrics),
        checkpoint: None,
        error: None,
    };
    if let Some(dir) = plan.out_dir {
        let stem = format!("exp{:02}_{}", split.experiment_id, model.kind());
        result.write_loss_csv(&dir.join(format!("{stem}_losses.csv")))?;
        let path = dir.join(format!("{stem}.ckpt"));
        let meta = CheckpointMeta {
            train_seed: plan.train_cfg.seed,
            experiment_id: Some(split.experiment_id),
            target: plan.target.to_string(),
            feature_names: plan.series.feature_names(),
        };
        save_checkpoint(&path, model, Some(&fitted.optimizer), &meta)?;
        result.checkpoint = Some(path);
    }
    Ok(result)
}

/// Fits and tests every model on every window. A failing experiment is
/// recorded in its result and the suite continues.
pub fn run_experiments(plan: &ExperimentPlan<'_>) -> Result<ExperimentSuite> {
    plan.train_cfg.validate()?;
    if plan.splits.is_empty() || plan.models.is_empty() {
        return Err(Error::Config("need at least one window and one model".into()));
    }
    if let Some(dir) = plan.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let features = plan.series.num_features();
    let mut previous: Vec<Option<Box<dyn Forecaster>>> = plan.models.iter().map(|_| None).collect();
    let mut results = Vec::new();
    for split in plan.splits {
        for (mi, &kind) in plan.models.iter().enumerate() {
            let fresh = build_model(kind, plan.models_cfg, features);
            let outcome = fresh.and_then(|mut model| {
                if plan.train_cfg.warm_start {
                    if let Some(prev) = &previous[mi] {
                        model.params_mut().copy_from(prev.params());
                    }
                }
                let r = run_one(plan, split, model.as_mut());
                previous[mi] = Some(model);
                r
            });
            match outcome {
                Ok(r) => {
                    log::info!(
                        "experiment {} {kind}: best val {:.4e} at epoch {}, test {:.4e}",
                        split.experiment_id,
                        r.best_val,
                        r.best_epoch,
                        r.test_mse().unwrap_or(f64::NAN)
                    );
                    results.push(r);
                }
                Err(e) => {
                    log::warn!("experiment {} {kind} failed: {e}", split.experiment_id);
                    results.push(ExperimentResult::failed(split.experiment_id, kind, &e));
                }
            }
        }
    }
    let summary = SummaryTable::from_results(plan.splits, plan.models, &results);
    Ok(ExperimentSuite { results, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: usize,
    pub period: Option<Period>,
    /// Best validation MSE per model, in column order.
    pub val: Vec<Option<f64>>,
    pub test: Vec<Option<f64>>,
    pub test_mae_physical: Vec<Option<f64>>,
}

/// Rows are experiments, columns are models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub models: Vec<ModelKind>,
    pub rows: Vec<SummaryRow>,
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.6e}"),
        _ => String::new(),
    }
}

impl SummaryTable {
    pub fn from_results(splits: &[ExperimentWindow], models: &[ModelKind], results: &[ExperimentResult]) -> Self {
        let rows = splits
            .iter()
            .map(|s| {
                let find = |k: ModelKind| {
                    results
                        .iter()
                        .find(|r| r.experiment_id == s.experiment_id && r.model == k && r.error.is_none())
                };
                SummaryRow {
                    experiment_id: s.experiment_id,
                    period: s.period,
                    val: models.iter().map(|&k| find(k).map(|r| r.best_val)).collect(),
                    test: models.iter().map(|&k| find(k).and_then(|r| r.test_mse())).collect(),
                    test_mae_physical: models
                        .iter()
                        .map(|&k| find(k).and_then(|r| r.test.map(|m| m.mae_physical)))
                        .collect(),
                }
            })
            .collect();
        Self {
            models: models.to_vec(),
            rows,
        }
    }

    /// Mean test MSE per model over the experiments that succeeded.
    pub fn mean_test(&self) -> Vec<Option<f64>> {
        (0..self.models.len())
            .map(|c| {
                let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.test[c]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// `experiment,<model>...` with test MSE in each cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("experiment");
        for m in &self.models {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{}", r.experiment_id);
            for &v in &r.test {
                let _ = write!(s, ",{}", cell(v));
            }
            s.push('\n');
        }
        s
    }

    /// Long form: one line per experiment and model with every score.
    pub fn to_detail_csv(&self) -> String {
        let mut s = String::from("experiment,start,end,model,val_mse,test_mse,test_mae_physical\n");
        for r in &self.rows {
            let (start, end) = match r.period {
                Some(p) => (p.start.to_rfc3339(), p.end.to_rfc3339()),
                None => (String::new(), String::new()),
            };
            for (c, m) in self.models.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{start},{end},{m},{},{},{}",
                    r.experiment_id,
                    cell(r.val[c]),
                    cell(r.test[c]),
                    cell(r.test_mae_physical[c])
                );
            }
        }
        s
    }

    /// Fixed-width table of validation/test MSE; the lowest test score of
    /// each row is starred.
    pub fn to_text(&self) -> String {
        let w = 12;
        let mut s = format!("{:<12}", "experiment");
        for m in &self.models {
            let _ = write!(s, " | {:^w2$}", m.name(), w2 = 2 * w + 1);
        }
        s.push('\n');
        let _ = write!(s, "{:<12}", "");
        for _ in &self.models {
            let _ = write!(s, " | {:>w$} {:>w$}", "val", "test");
        }
        s.push('\n');
        let fmt = |v: Option<f64>, star: bool| match v {
            Some(x) if x.is_finite() => format!("{x:.4e}{}", if star { "*" } else { "" }),
            _ => "-".to_string(),
        };
        let best = |vals: &[Option<f64>]| {
            vals.iter()
                .enumerate()
                .filter_map(|(i, v)| v.filter(|x| x.is_finite()).map(|x| (i, x)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        };
        for r in &self.rows {
            let label = match r.period {
                Some(p) => format!("{} {}", r.experiment_id, p.start.format("%Y-%m")),
                None => r.experiment_id.to_string(),
            };
            let _ = write!(s, "{label:<12}");
            let b = best(&r.test);
            for c in 0..self.models.len() {
                let _ = write!(s, " | {:>w$} {:>w$}", fmt(r.val[c], false), fmt(r.test[c], b == Some(c)));
            }
            s.push('\n');
        }
        let means = self.mean_test();
        let b = best(&means);
        let _ = write!(s, "{:<12}", "mean");
        for (c, m) in means.iter().enumerate() {
            let _ = write!(s, " | {:>w$} {:>w$}", "", fmt(*m, b == Some(c)));
        }
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [
            ("summary.csv", self.to_csv()),
            ("summary_detail.csv", self.to_detail_csv()),
            ("summary.txt", self.to_text()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}
