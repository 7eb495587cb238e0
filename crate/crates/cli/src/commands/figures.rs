//! Figures rendered from the CSVs the commands write, so `plot` can
//! redraw any run directory.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::Table;
use crate::error::{CliError, CliResult};
use crate::plot::{self, Scale};

const CHART: (u32, u32) = (480, 320);

/// `epoch,train_loss,val_loss` as two curves on a log axis.
pub fn losses(csv: &Path, png: &Path) -> CliResult<()> {
    let t = Table::read(csv)?;
    let img = plot::line_chart(&[t.column("train_loss")?, t.column("val_loss")?], CHART.0, CHART.1, true);
    plot::save(&img, png)
}

/// `feature,<names...>` square matrix on a fixed [-1, 1] diverging scale.
pub fn correlation(csv: &Path, png: &Path, px: u32) -> CliResult<()> {
    let t = Table::read(csv)?;
    let d = t.rows.len();
    let mut m = Array2::<f64>::zeros((d, d));
    for (i, r) in t.rows.iter().enumerate() {
        for j in 0..d {
            m[[i, j]] = r.get(j + 1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        }
    }
    let scale = Scale {
        lo: -1.0,
        hi: 1.0,
        diverging: true,
    };
    plot::save(&plot::heatmap(m.view(), &scale, px.max(16)), png)
}

/// `t,value,lagged` as two curves.
pub fn trend(csv: &Path, png: &Path) -> CliResult<()> {
    let t = Table::read(csv)?;
    let img = plot::line_chart(&[t.column("value")?, t.column("lagged")?], CHART.0, CHART.1, false);
    plot::save(&img, png)
}

/// Frames grouped by a label column, each frame addressed by `step`,
/// `row` and `col`.
fn frames(t: &Table, label: &str, step: &str, value: &str) -> CliResult<BTreeMap<String, Vec<Array2<f64>>>> {
    let (li, si, ri, ci, vi) = (
        t.index(label)?,
        t.index(step)?,
        t.index("row")?,
        t.index("col")?,
        t.index(value)?,
    );
    let num = |r: &Vec<String>, i: usize| -> CliResult<usize> {
        r[i].parse()
            .map_err(|_| CliError::data(format!("bad index `{}` in column {}", r[i], t.header[i])))
    };
    let (mut m, mut n) = (0, 0);
    for r in &t.rows {
        m = m.max(num(r, ri)? + 1);
        n = n.max(num(r, ci)? + 1);
    }
    let mut out: BTreeMap<String, Vec<Array2<f64>>> = BTreeMap::new();
    for r in &t.rows {
        let s = num(r, si)?;
        let group = out.entry(r[li].clone()).or_default();
        while group.len() <= s {
            group.push(Array2::from_elem((m, n), f64::NAN));
        }
        group[s][[num(r, ri)?, num(r, ci)?]] = r[vi].parse().unwrap_or(f64::NAN);
    }
    Ok(out)
}

/// `kind,step,row,col,value`: rows input, prediction, truth (when
/// present), one shared scale.
pub fn prediction(csv: &Path, png: &Path, px: u32) -> CliResult<()> {
    let t = Table::read(csv)?;
    let mut groups = frames(&t, "kind", "step", "value")?;
    let rows: Vec<Vec<Array2<f64>>> = ["input", "prediction", "truth"]
        .iter()
        .filter_map(|k| groups.remove(*k))
        .collect();
    let scale = Scale::shared(rows.iter().flatten().map(|f| f.view()));
    plot::save(&plot::strip(&rows, &scale, px), png)
}

/// `feature,input_step,row,col,weight`: one row per feature, one column
/// per input step.
pub fn attention(csv: &Path, png: &Path, px: u32) -> CliResult<()> {
    let t = Table::read(csv)?;
    let groups = frames(&t, "feature", "input_step", "weight")?;
    let rows: Vec<Vec<Array2<f64>>> = groups.into_values().collect();
    let scale = Scale::shared(rows.iter().flatten().map(|f| f.view()));
    plot::save(&plot::strip(&rows, &scale, px), png)
}

/// Redraws whatever figures `dir` has CSVs for into `out`.
pub fn redraw(dir: &Path, out: &Path, px: u32) -> CliResult<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("cannot list {}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut drawn = 0;
    for name in names {
        let csv = dir.join(&name);
        let png = out.join(name.replace(".csv", ".png"));
        let done = if name.ends_with("_losses.csv") {
            losses(&csv, &png)
        } else if name == "correlation.csv" {
            correlation(&csv, &png, px)
        } else if name.starts_with("trend_lag") {
            trend(&csv, &png)
        } else if name == "prediction.csv" {
            prediction(&csv, &png, px)
        } else if name == "attention.csv" {
            attention(&csv, &png, px)
        } else {
            continue;
        };
        done?;
        drawn += 1;
    }
    Ok(drawn)
}
