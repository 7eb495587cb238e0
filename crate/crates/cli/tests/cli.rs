use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use forecast_core::datastore::GridSeries;

const BASE: &str = r#"
seed = 3
models = ["sma", "weather_model"]

[synthetic]
height = 8
width = 8
len_time = 80
features = 3
seed = 1

[splits]
window_steps = 60
stride_steps = 20
max_experiments = 2

[train]
max_epochs = 2
batch_size = 4

[nets.weather_model]
encoder_hidden = [4, 4]
decoder_hidden = [4, 4]
encoder_kernels = [3, 1]
decoder_kernels = [3, 1]
t_in = 3
t_out = 2

[nets.sma]
t_in = 4
t_out = 2
"#;

fn forecast(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("input.toml");
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_forecast"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env("RUST_LOG", "warn")
        .env_remove("FORECAST_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

/// One training run shared by the tests that need checkpoints.
fn trained() -> &'static PathBuf {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let out = scratch().join("train_a");
        ok(&forecast(&["train", "--out", out.to_str().unwrap()], BASE, &scratch().join("cfg_a")));
        out
    })
}

fn loss_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with("_losses.csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn train_twice_gives_identical_losses() {
    let a = trained();
    let b = scratch().join("train_b");
    ok(&forecast(&["train", "--out", b.to_str().unwrap()], BASE, &scratch().join("cfg_b")));
    let names = loss_files(a);
    assert_eq!(names.len(), 4, "{names:?}");
    assert_eq!(names, loss_files(&b));
    for n in &names {
        assert_eq!(read(a.join(n)), read(b.join(n)), "{n}");
        assert!(a.join(n.replace(".csv", ".png")).exists());
    }
    assert_eq!(read(a.join("summary.csv")), read(b.join("summary.csv")));
    for f in ["config.toml", "REVISION", "exp00_sma.ckpt", "exp01_weather_model.ckpt", "summary.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn rerun_from_echoed_config_reproduces() {
    let a = trained();
    let echo = read(a.join("config.toml"));
    let c = scratch().join("train_c");
    ok(&forecast(&["train", "--out", c.to_str().unwrap()], &echo, &scratch().join("cfg_c")));
    for n in loss_files(a) {
        assert_eq!(read(a.join(&n)), read(c.join(&n)), "{n}");
    }
}

#[test]
fn evaluate_writes_one_row_per_experiment() {
    let a = trained();
    let cfg = format!("{BASE}\n[evaluate]\ncheckpoints = {:?}\n", a.to_str().unwrap());
    let out = scratch().join("eval");
    ok(&forecast(&["evaluate", "--out", out.to_str().unwrap()], &cfg, &scratch().join("cfg_eval")));
    let summary = read(out.join("summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "experiment,sma,weather_model");
    assert_eq!(lines.len(), 3, "{summary}");
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), 3);
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().is_ok()), "{l}");
    }
    // Same splits, f32-stored weights: the training-time test MSE comes back.
    let trained = read(a.join("summary.csv"));
    for (x, y) in summary.lines().zip(trained.lines()).skip(1) {
        for (p, q) in x.split(',').zip(y.split(',')).skip(1) {
            let (p, q): (f64, f64) = (p.parse().unwrap(), q.parse().unwrap());
            assert!((p - q).abs() <= 1e-4 * q.abs(), "{p} vs {q}");
        }
    }
}

#[test]
fn predict_ten_frames_span_thirty_hours() {
    let a = trained();
    let ck = a.join("exp00_weather_model.ckpt");
    let cfg = format!("{BASE}\n[predict]\ncheckpoint = {:?}\nt_out = 10\nstart = 40\n", ck.to_str().unwrap());
    let out = scratch().join("predict");
    ok(&forecast(&["predict", "--out", out.to_str().unwrap()], &cfg, &scratch().join("cfg_pred")));
    let times = read(out.join("forecast.csv"));
    let rows: Vec<Vec<&str>> = times.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0][2], "3");
    assert_eq!(rows[9][2], "30");
    let grid = GridSeries::read_portable(&out.join("prediction.fcg")).unwrap();
    assert_eq!((grid.len_time(), grid.num_features()), (10, 1));
    assert_eq!((grid.end_time() - grid.start_time()).num_hours(), 30);
    let att = read(out.join("attention.csv"));
    // 3 features x 3 input steps x 64 cells.
    assert_eq!(att.lines().count(), 1 + 3 * 3 * 64);
    for f in ["prediction.csv", "prediction.png", "attention.png", "predict.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn fixed_horizon_model_rejects_longer_forecast() {
    let a = trained();
    let ck = a.join("exp00_sma.ckpt");
    let cfg = format!("{BASE}\n[predict]\ncheckpoint = {:?}\nt_out = 10\n", ck.to_str().unwrap());
    let out = forecast(&["predict", "--out", scratch().join("pred_sma").to_str().unwrap()], &cfg, &scratch().join("cfg_ps"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_redraws_a_run_directory() {
    let a = trained();
    let cfg = format!("{BASE}\n[plot]\nrun_dir = {:?}\n", a.to_str().unwrap());
    let out = scratch().join("plot");
    ok(&forecast(&["plot", "--out", out.to_str().unwrap()], &cfg, &scratch().join("cfg_plot")));
    assert!(out.join("exp00_sma_losses.png").exists());
}

fn error_line(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

#[test]
fn unknown_key_exits_two() {
    let dir = scratch().join("bad_key");
    let out = forecast(&["eda", "--out", dir.to_str().unwrap()], "[train]\nlr = 0.1\nmomentum = 0.9\n", &dir);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("momentum"));
}

#[test]
fn missing_grid_exits_three() {
    let dir = scratch().join("no_grid");
    let out = forecast(&["ingest", "--out", dir.to_str().unwrap()], "[data]\ngrid = \"/nonexistent/grid.nc\"\n", &dir);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["exit_code"], 3);
}

#[test]
fn corrupt_checkpoint_exits_one() {
    let dir = scratch().join("corrupt");
    std::fs::create_dir_all(&dir).unwrap();
    let ck = dir.join("bad.ckpt");
    std::fs::write(&ck, b"FCSTCKPT garbage").unwrap();
    let cfg = format!("{BASE}\n[predict]\ncheckpoint = {:?}\n", ck.to_str().unwrap());
    let out = forecast(&["predict", "--out", dir.join("out").to_str().unwrap()], &cfg, &dir);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "runtime");
}

#[test]
fn eda_and_flow_emit_numbers() {
    let dir = scratch().join("eda");
    ok(&forecast(&["eda", "--out", dir.to_str().unwrap()], BASE, &dir));
    let corr = read(dir.join("correlation.csv"));
    assert_eq!(corr.lines().next().unwrap(), "feature,temperature,u_wind,v_wind");
    assert!(dir.join("trend_lag4.csv").exists() && dir.join("correlation.png").exists());

    let dir = scratch().join("flow");
    ok(&forecast(&["flow", "--out", dir.to_str().unwrap()], BASE, &dir));
    let stats = read(dir.join("flow_stats.csv"));
    let row = |name: &str| -> Vec<String> {
        stats
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap()
            .split(',')
            .map(str::to_string)
            .collect()
    };
    assert_eq!(row("identity")[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row("scale")[1].parse::<f64>().unwrap(), 0.0);
    assert!(row("sign_flip")[1].parse::<f64>().unwrap() > 0.0);
    assert_eq!(std::fs::read_dir(&dir).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".png")
    }).count(), 4);
}

#[test]
fn ingest_then_interpolate_stations() {
    let dir = scratch().join("ingest");
    ok(&forecast(&["ingest", "--out", dir.to_str().unwrap()], BASE, &dir));
    let grid = dir.join("grid.fcg");
    assert_eq!(GridSeries::read_portable(&grid).unwrap().len_time(), 80);

    let csv = dir.join("stations.csv");
    let mut s = String::from("station_id,lat,lon,timestamp,temperature\n");
    for (t, ts) in ["2000-01-01T00:00:00Z", "2000-01-01T03:00:00Z", "2000-01-01T06:00:00Z"].iter().enumerate() {
        for (i, (lat, lon)) in [(44.5, 20.25), (43.5, 21.5), (44.0, 20.75), (43.25, 20.0)].iter().enumerate() {
            s += &format!("s{i},{lat},{lon},{ts},{}\n", 270.0 + t as f64 + i as f64 * 2.0);
        }
    }
    std::fs::write(&csv, s).unwrap();
    let cfg = format!(
        "[data]\nstations = {:?}\ntemplate = {:?}\n",
        csv.to_str().unwrap(),
        grid.to_str().unwrap()
    );
    let out = scratch().join("interp");
    ok(&forecast(&["interpolate", "--out", out.to_str().unwrap()], &cfg, &scratch().join("cfg_interp")));
    let powers = read(out.join("powers.csv"));
    assert_eq!(powers.lines().next().unwrap(), "t,feature,power");
    assert_eq!(powers.lines().count(), 4);
    let g = GridSeries::read_portable(&out.join("interpolated.fcg")).unwrap();
    assert_eq!((g.len_time(), g.height(), g.width()), (3, 8, 8));
    let lo = g.values().iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = g.values().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    assert!(lo >= 270.0 && hi <= 278.0, "{lo} {hi}");
}
