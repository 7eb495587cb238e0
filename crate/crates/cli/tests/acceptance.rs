//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release -p forecast-cli --test acceptance -- [filter...]`
//! runs the criteria whose name contains any filter. The real-data smoke
//! needs `FORECAST_ACCEPT_GRID` pointing at a reanalysis extract.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeDelta, TimeZone, Utc};
use ndarray::{Array2, Array3, Array5, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forecast_core::autograd::{Graph, ParamStore};
use forecast_core::datastore::{
    assemble_batches, inference_batch, make_windows, rolling_splits, rolling_splits_indexed, synth_advection,
    Fractions, Period,
};
use forecast_core::flowfield::{flow_matrix, perturbation_diagnostic};
use forecast_core::interpolate::{idw, loocv_power, EXACT_HIT_KM};
use forecast_core::nets::{Attention, Forecaster, ModelConfig, ModelKind, ModelsConfig, SoftmaxAxis, WeatherModel};
use forecast_core::trainer::gradcheck::{check_attention, check_convlstm_step, check_output_conv, check_unet};
use forecast_core::trainer::{clip_gradients, run_experiments, Adam, EarlyStopping, ExperimentPlan, TrainConfig};
use forecast_cli::{Cli, Command};

const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const ATTENTION_INSTANCES: usize = 200;
const SUM_TOL: f64 = 1e-6;
const IDW_INSTANCES: usize = 100;
const TIE_REL: f64 = 1e-12;
const FLOW_TOL: f64 = 1e-12;
const ANGLE_TOL_DEG: f64 = 1e-9;
const OVERFIT_LOSS: f64 = 1e-3;
const OVERFIT_EPOCHS: usize = 500;
const OVERFIT_BUDGET: Duration = Duration::from_secs(300);
const ORDER_MARGIN: f64 = 0.10;
const ORDER_BUDGET: Duration = Duration::from_secs(1800);

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass: Some(pass),
            detail: detail.into(),
        }
    }

    fn skip(detail: impl Into<String>) -> Self {
        Self {
            pass: None,
            detail: detail.into(),
        }
    }
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradients", gradients),
        ("attention_invariants", attention_invariants),
        ("idw_oracle", idw_oracle),
        ("flow_oracle", flow_oracle),
        ("trainability", trainability),
        ("model_ordering", model_ordering),
        ("protocol", protocol),
        ("recursive_length", recursive_length),
        ("real_data_smoke", real_data_smoke),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let tag = match out.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} {name}: {} [{:.1} s]", out.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let reports = [
        ("convlstm_step", check_convlstm_step(4, 1)),
        ("attention/feature", check_attention(4, 3, SoftmaxAxis::Feature, 2)),
        ("attention/spatial", check_attention(4, 3, SoftmaxAxis::Spatial, 3)),
        ("output_conv", check_output_conv(6, 4)),
        ("unet", check_unet(6, 5)),
    ];
    let elapsed = t.elapsed();
    let worst = reports
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .expect("nonempty");
    let detail = reports
        .iter()
        .map(|(n, r)| format!("{n} {:.1e}", r.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::check(
        worst.1.max_rel_error < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!("{detail} (limit {GRAD_TOL:.0e}; {:.1} s of {} s)", elapsed.as_secs_f64(), GRAD_BUDGET.as_secs()),
    )
}

fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut min_w, mut worst_sum, mut sign_errors) = (f64::INFINITY, 0.0f64, 0usize);
    for inst in 0..ATTENTION_INSTANCES {
        let b = rng.random_range(1..=2);
        let d = rng.random_range(1..=4);
        let (m, n) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let hidden = rng.random_range(1..=3);
        let t_in = rng.random_range(1..=3);
        let q = rng.random_range(1..=3);
        let kernel = if rng.random_bool(0.5) { 1 } else { 3 };
        let spread = [1.0, 10.0, 50.0][inst % 3];
        let inputs = Array5::from_shape_simple_fn((b, t_in, d, m, n), || rng.random_range(-spread..spread));
        let h = ArrayD::from_shape_simple_fn(IxDyn(&[b, hidden, m, n]), || rng.random_range(-spread..spread));
        let with_h = rng.random_bool(0.7);
        // A quarter of the entries are exact zeros, the rest either sign.
        let x_t = ArrayD::from_shape_simple_fn(IxDyn(&[b, d, m, n]), || {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(-5.0..5.0)
            }
        });
        for axis in [SoftmaxAxis::Feature, SoftmaxAxis::Spatial] {
            let mut store = ParamStore::new();
            let att = Attention::new(&mut store, &mut rng, "a", hidden, t_in, q, kernel, axis);
            let mut g = Graph::new();
            let windows = g.constant(Attention::feature_windows(&inputs));
            let term = att.window_term(&mut g, &store, windows);
            let hv = with_h.then(|| g.constant(h.clone()));
            let e = att.energies(&mut g, &store, term, hv, b, d);
            let a = att.weights(&mut g, e);
            let xv = g.constant(x_t.clone());
            let out = Attention::apply(&mut g, a, xv);
            let w = g.value(a).clone().into_dimensionality::<ndarray::Ix4>().expect("4-D weights");
            assert_eq!(w.dim(), (b, d, m, n));
            min_w = min_w.min(w.iter().copied().fold(f64::INFINITY, f64::min));
            let sums = match axis {
                SoftmaxAxis::Feature => w.sum_axis(Axis(1)).into_dyn(),
                SoftmaxAxis::Spatial => w.sum_axis(Axis(3)).sum_axis(Axis(2)).into_dyn(),
            };
            worst_sum = sums.iter().fold(worst_sum, |acc, s| acc.max((s - 1.0).abs()));
            for (y, x) in g.value(out).iter().zip(x_t.iter()) {
                if (*y > 0.0) != (*x > 0.0) || (*y < 0.0) != (*x < 0.0) || (*y == 0.0) != (*x == 0.0) {
                    sign_errors += 1;
                }
            }
        }
    }
    Outcome::check(
        min_w >= 0.0 && worst_sum <= SUM_TOL && sign_errors == 0,
        format!(
            "{ATTENTION_INSTANCES} instances x 2 axes: min weight {min_w:.2e}, worst |sum - 1| {worst_sum:.1e} (limit {SUM_TOL:.0e}), sign changes {sign_errors}"
        ),
    )
}

/// Leave-one-out power by exhaustive search with plain `1 / d^p` weights.
/// Scores equal up to rounding count as ties, so with two stations (every
/// power predicts the other value) the first candidate wins.
fn loocv_oracle(values: &[f64], dist: &Array2<f64>, candidates: &[f64]) -> f64 {
    let n = values.len();
    let mut scores = Vec::new();
    for &p in candidates {
        let mut total = 0.0;
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let w = 1.0 / dist[[i, j]].powf(p);
                    num += w * values[j];
                    den += w;
                }
            }
            total += (num / den - values[i]).powi(2);
        }
        scores.push(total / n as f64);
    }
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] * (1.0 - TIE_REL) {
            best = k;
        }
    }
    candidates[best]
}

fn idw_oracle() -> Outcome {
    let candidates = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut mismatches, mut bound_violations, mut hit_errors) = (0, 0, 0);
    for _ in 0..IDW_INSTANCES {
        let n = rng.random_range(2..=6);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)))
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..40.0)).collect();
        let dist = Array2::from_shape_fn((n, n), |(i, j)| {
            (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1)
        });
        let got = loocv_power(&values, &dist, &candidates).expect("valid instance");
        if got != loocv_oracle(&values, &dist, &candidates) {
            mismatches += 1;
        }

        let q = (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
        let to_q: Vec<f64> = pts.iter().map(|p| (p.0 - q.0).hypot(p.1 - q.1)).collect();
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for &p in &candidates {
            let v = idw(&values, &to_q, p).expect("valid query");
            if !(lo <= v && v <= hi) {
                bound_violations += 1;
            }
        }

        let k = rng.random_range(0..n);
        let mut hit = to_q.clone();
        hit[k] = if rng.random_bool(0.5) { 0.0 } else { EXACT_HIT_KM / 2.0 };
        if idw(&values, &hit, 2.0).expect("valid query") != values[k] {
            hit_errors += 1;
        }
    }
    Outcome::check(
        mismatches == 0 && bound_violations == 0 && hit_errors == 0,
        format!(
            "{IDW_INSTANCES} instances: power mismatches {mismatches}, convex-bound violations {bound_violations}, exact-hit errors {hit_errors}"
        ),
    )
}

/// A Gaussian blob moving one column per frame.
fn translating_blob(frames: usize, size: usize) -> Array3<f64> {
    Array3::from_shape_fn((frames, size, size), |(t, i, j)| {
        let (ci, cj) = (size as f64 / 2.0 - 0.3, 2.2 + t as f64);
        let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
        10.0 * (-r2 / 6.0).exp()
    })
}

fn flow_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut diff = |got: f64, want: f64| worst = worst.max((got - want).abs());

    // F = ((x - up) + (x - down), (x - left) + (x - right)) for the one
    // interior cell: x = 6, up 2, down 9, left 3, right 4.
    let prev = Array2::from_shape_vec((3, 3), vec![1.0, 2.0, 0.0, 3.0, 5.0, 4.0, 0.0, 9.0, 1.0]).unwrap();
    let mut now = Array2::zeros((3, 3));
    now[[1, 1]] = 6.0;
    let f = flow_matrix(now.view(), prev.view()).expect("3x3 flow");
    let shape3 = f.0.dim() == (1, 1, 2);
    diff(f.0[[0, 0, 0]], 1.0);
    diff(f.0[[0, 0, 1]], 5.0);

    // prev[i][j] = i^2 + 2j and now[i][j] = 3i - j^2, worked out by hand
    // for the 3x3 interior.
    let prev = Array2::from_shape_fn((5, 5), |(i, j)| (i * i + 2 * j) as f64);
    let now = Array2::from_shape_fn((5, 5), |(i, j)| 3.0 * i as f64 - (j * j) as f64);
    let vertical = [[-4.0, -14.0, -28.0], [-4.0, -14.0, -28.0], [-8.0, -18.0, -32.0]];
    let horizontal = [[-2.0, -12.0, -26.0], [-2.0, -12.0, -26.0], [-6.0, -16.0, -30.0]];
    let f = flow_matrix(now.view(), prev.view()).expect("5x5 flow");
    let shape5 = f.0.dim() == (3, 3, 2);
    for i in 0..3 {
        for j in 0..3 {
            diff(f.0[[i, j, 0]], vertical[i][j]);
            diff(f.0[[i, j, 1]], horizontal[i][j]);
        }
    }

    let x = translating_blob(8, 12);
    let identity = perturbation_diagnostic(x.view(), |v| v.to_owned()).unwrap().mean_angle_deg;
    let scaled: Vec<f64> = [0.5, 2.0, 3.7]
        .iter()
        .map(|&c| perturbation_diagnostic(x.view(), |v| v.mapv(|a| a * c)).unwrap().mean_angle_deg)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let signs = Array2::from_shape_simple_fn((12, 12), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let flipped = perturbation_diagnostic(x.view(), |v| &v * &signs).unwrap().mean_angle_deg;
    let worst_scale = scaled.iter().copied().fold(0.0, f64::max);

    Outcome::check(
        shape3 && shape5 && worst <= FLOW_TOL && identity <= ANGLE_TOL_DEG && worst_scale <= ANGLE_TOL_DEG && flipped > 0.0,
        format!(
            "fixture error {worst:.1e} (limit {FLOW_TOL:.0e}); identity {identity:.1e} deg, scaling {worst_scale:.1e} deg (limit {ANGLE_TOL_DEG:.0e}); sign flip {flipped:.2} deg"
        ),
    )
}

fn overfit_model() -> WeatherModel {
    let cfg = ModelConfig {
        t_in: 5,
        t_out: 5,
        init_seed: 1,
        ..ModelConfig::default()
    };
    WeatherModel::new(cfg, 3).expect("valid config")
}

fn trainability() -> Outcome {
    let series = synth_advection(8, 8, 40, 3, 3).expect("synthetic series");
    let windows = make_windows(&series, 5, 5, "temperature").expect("windows");
    let batch = assemble_batches(&series, &windows[..4], 4, 0).expect("batch").remove(0);
    let mut model = overfit_model();
    let mut opt = Adam::new(model.params(), 3e-3);
    let t = Instant::now();
    let (mut last, mut reached) = (f64::NAN, None);
    for epoch in 1..=OVERFIT_EPOCHS {
        let mut g = Graph::new();
        let out = model.forward(&mut g, &batch).expect("forward");
        let truth = g.constant(batch.targets.clone().into_dyn());
        let loss = g.mse(out.prediction, truth);
        last = g.scalar(loss);
        if !last.is_finite() {
            break;
        }
        if last < OVERFIT_LOSS {
            reached = Some(epoch);
            break;
        }
        let mut grads = g.backward(loss).params(model.params());
        clip_gradients(&mut grads, 5.0);
        opt.update(model.params_mut(), &grads);
    }
    let elapsed = t.elapsed();
    let detail = match reached {
        Some(e) => format!("loss {last:.2e} < {OVERFIT_LOSS:.0e} at epoch {e}"),
        None => format!("loss {last:.2e} after {OVERFIT_EPOCHS} epochs (limit {OVERFIT_LOSS:.0e})"),
    };
    Outcome::check(
        reached.is_some() && elapsed < OVERFIT_BUDGET,
        format!("{detail}; {:.1} s of {} s", elapsed.as_secs_f64(), OVERFIT_BUDGET.as_secs()),
    )
}

/// The desk-scale suite: three 200-step windows of a 400-step series.
fn ordering_setup() -> (ModelsConfig, TrainConfig) {
    let mut nets = ModelsConfig::default().with_init_seed(7);
    nets.weather_model.encoder_hidden = vec![8, 8, 8];
    nets.weather_model.decoder_hidden = vec![8, 8, 8];
    nets.weather_model.t_in = 5;
    nets.weather_model.t_out = 5;
    nets.convlstm.t_in = 5;
    nets.convlstm.t_out = 5;
    nets.sma.t_in = 30;
    nets.sma.t_out = 5;
    let train = TrainConfig {
        lr: 3e-3,
        batch_size: 4,
        max_epochs: 30,
        seed: 7,
        ..TrainConfig::default()
    };
    (nets, train)
}

fn model_ordering() -> Outcome {
    let t = Instant::now();
    let series = synth_advection(16, 16, 400, 3, 7).expect("synthetic series");
    let splits = rolling_splits_indexed(400, 200, 100, Fractions::default()).expect("splits");
    let models = [ModelKind::WeatherModel, ModelKind::Convlstm, ModelKind::Sma];
    let (nets, train) = ordering_setup();
    let suite = match run_experiments(&ExperimentPlan {
        series: &series,
        splits: &splits,
        models: &models,
        models_cfg: &nets,
        train_cfg: &train,
        target: "temperature",
        out_dir: None,
    }) {
        Ok(s) => s,
        Err(e) => return Outcome::check(false, format!("suite failed: {e}")),
    };
    let elapsed = t.elapsed();
    let mean = |kind: ModelKind| -> Option<f64> {
        let v: Vec<f64> = suite
            .results
            .iter()
            .filter(|r| r.model == kind)
            .map(|r| r.test.map(|m| m.mse_physical))
            .collect::<Option<_>>()?;
        (v.len() == splits.len()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let (Some(wm), Some(cl), Some(sma)) = (mean(ModelKind::WeatherModel), mean(ModelKind::Convlstm), mean(ModelKind::Sma))
    else {
        return Outcome::check(false, "an experiment failed");
    };
    let gain = 1.0 - wm / sma;
    Outcome::check(
        wm <= cl && gain >= ORDER_MARGIN && elapsed < ORDER_BUDGET,
        format!(
            "{} windows, mean test MSE: weather_model {wm:.4}, convlstm {cl:.4}, sma {sma:.4}; gain over sma {:.1}% (limit {:.0}%); {:.0} s of {} s",
            splits.len(),
            gain * 100.0,
            ORDER_MARGIN * 100.0,
            elapsed.as_secs_f64(),
            ORDER_BUDGET.as_secs()
        ),
    )
}

fn protocol() -> Outcome {
    let at = |y, m| Utc.from_utc_datetime(&NaiveDate::from_ymd_opt(y, m, 1).unwrap().and_hms_opt(0, 0, 0).unwrap());
    let step = TimeDelta::hours(3);
    let span = Period {
        start: at(2000, 1),
        end: at(2006, 1),
    };
    let windows = rolling_splits(span, step, 24, 6, Fractions::default()).expect("splits");
    let starts: Vec<(i32, u32)> = (0..9).map(|k| (2000 + k / 2, 1 + 6 * (k % 2) as u32)).collect();
    let mut problems = Vec::new();
    if windows.len() != starts.len() {
        problems.push(format!("{} windows, want {}", windows.len(), starts.len()));
    }
    for (w, &(y, m)) in windows.iter().zip(&starts) {
        let p = w.period.expect("calendar window");
        if p.start != at(y, m) || p.end != at(y + 2, m) {
            problems.push(format!("window {} spans {} .. {}", w.experiment_id, p.start, p.end));
        }
        // Eight 3-hour steps a day.
        let days = |yy: i32| (at(yy, m) - at(2000, 1)).num_days() as usize;
        let (first, len) = (days(y) * 8, (days(y + 2) - days(y)) * 8);
        let tenth = len / 10;
        let want = (first..first + len - 2 * tenth, tenth, tenth);
        let got = (w.train_range.clone(), w.val_range.len(), w.test_range.len());
        let contiguous = w.train_range.end == w.val_range.start && w.val_range.end == w.test_range.start;
        if got != want || !contiguous || w.test_range.end != first + len {
            problems.push(format!("window {} ranges {:?} {:?} {:?}", w.experiment_id, w.train_range, w.val_range, w.test_range));
        }
    }
    // First window, by hand: 731 days = 5848 steps, 584 validation and test.
    if let Some(w) = windows.first() {
        if (w.train_range.clone(), w.val_range.clone(), w.test_range.clone()) != (0..4680, 4680..5264, 5264..5848) {
            problems.push("first window is not 4680/584/584".into());
        }
    }

    let mut stopper = EarlyStopping::new(4);
    let mut stopped = None;
    for (i, v) in [5.0, 4.0, 4.1, 4.2, 4.3, 4.4].into_iter().enumerate() {
        if stopper.observe(i + 1, v).stop {
            stopped = Some(i + 1);
            break;
        }
    }
    let best = stopper.best().map(|b| b.0);
    if stopped != Some(6) || best != Some(2) {
        problems.push(format!("early stop at {stopped:?}, best {best:?}; want 6 and 2"));
    }
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            "9 windows from 2000-01 every 6 months, 80/10/10 contiguous; early stop at epoch 6, best epoch 2".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn recursive_length() -> Outcome {
    let model = overfit_model();
    let series = synth_advection(8, 8, 12, 3, 9).expect("synthetic series");
    let before = model.params().clone();
    let mut problems = Vec::new();
    for t_out in [1, 5, 10, 20] {
        let batch = inference_batch(&series, 0, 5, t_out, "temperature").expect("batch");
        let mut g = Graph::new();
        let direct = model.run(&mut g, &batch.inputs, 0, t_out);
        let via_trait = model.forward(&mut g, &batch).expect("forward");
        for (how, v) in [("run", direct.prediction), ("forward", via_trait.prediction)] {
            let shape = g.shape(v).to_vec();
            if shape != [1, t_out, 8, 8] {
                problems.push(format!("{how} T_out {t_out}: shape {shape:?}"));
            }
        }
    }
    let unchanged = before.iter().zip(model.params().iter()).all(|(a, b)| a.2 == b.2);
    if !unchanged {
        problems.push("parameters changed".into());
    }
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            "T_out 1, 5, 10, 20 give exactly that many frames; parameters unchanged".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn forecast(command: Command, config: &Path, out: &Path) -> Result<PathBuf, String> {
    let cli = Cli {
        command,
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        seed: None,
        model: None,
        data_root: None,
    };
    forecast_cli::run(&cli).map_err(|e| format!("{command:?}: {}", e.to_json_line()))
}

fn real_data_smoke() -> Outcome {
    let Some(grid) = std::env::var_os("FORECAST_ACCEPT_GRID").map(PathBuf::from) else {
        return Outcome::skip("set FORECAST_ACCEPT_GRID to a reanalysis extract to run");
    };
    match smoke(&grid) {
        Ok(detail) => Outcome::check(true, detail),
        Err(e) => Outcome::check(false, e),
    }
}

fn smoke(grid: &Path) -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let write = |name: &str, text: String| -> Result<PathBuf, String> {
        let p = root.join(name);
        std::fs::write(&p, text).map_err(|e| e.to_string())?;
        Ok(p)
    };
    let base = format!("[data]\ngrid = {:?}\n", grid.to_str().ok_or("grid path is not UTF-8")?);
    let ingest_dir = forecast(Command::Ingest, &write("ingest.toml", base.clone())?, &root.join("ingest"))?;
    let portable = ingest_dir.join("grid.fcg");
    let series = forecast_core::datastore::GridSeries::read_portable(&portable).map_err(|e| e.to_string())?;
    let steps = series.len_time().min(160);
    let run = format!(
        "models = [\"sma\", \"weather_model\"]\n\n[data]\ngrid = {:?}\n\n[splits]\nwindow_steps = {steps}\nmax_experiments = 1\n\n[train]\nmax_epochs = 1\nbatch_size = 4\n",
        portable.to_str().unwrap()
    );
    let train_dir = forecast(Command::Train, &write("train.toml", run.clone())?, &root.join("train"))?;
    let eval = format!("{run}\n[evaluate]\ncheckpoints = {:?}\n", train_dir.to_str().unwrap());
    let eval_dir = forecast(Command::Evaluate, &write("evaluate.toml", eval)?, &root.join("evaluate"))?;
    let plot = format!("{run}\n[plot]\nrun_dir = {:?}\n", train_dir.to_str().unwrap());
    forecast(Command::Plot, &write("plot.toml", plot)?, &root.join("plot"))?;
    let ck = train_dir.join("exp00_weather_model.ckpt");
    let predict = format!("{run}\n[predict]\ncheckpoint = {:?}\n", ck.to_str().unwrap());
    let pred_dir = forecast(Command::Predict, &write("predict.toml", predict)?, &root.join("predict"))?;

    let summary = std::fs::read_to_string(eval_dir.join("summary.csv")).map_err(|e| e.to_string())?;
    if summary.lines().next() != Some("experiment,sma,weather_model") || summary.lines().count() != 2 {
        return Err(format!("unexpected summary:\n{summary}"));
    }
    for f in ["attention.csv", "attention.png"] {
        if !pred_dir.join(f).exists() {
            return Err(format!("predict wrote no {f}"));
        }
    }
    Ok(format!(
        "{}x{} grid, {} features, {} steps: ingest, train, evaluate, plot and predict completed",
        series.height(),
        series.width(),
        series.num_features(),
        series.len_time()
    ))
}
