use forecast_core::autograd::{Graph, ParamGrads, ParamStore};
use forecast_core::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use forecast_core::datastore::{
    assemble_batches, make_windows, rolling_splits_indexed, synth_advection, Batch, Fractions,
    NormalizationRecord,
};
use forecast_core::nets::{build_model, ModelKind, ModelsConfig, SoftmaxAxis};
use forecast_core::trainer::gradcheck::*;
use forecast_core::trainer::*;
use forecast_core::Error;
use ndarray::{Array4, Array5, ArrayD, IxDyn};
use proptest::prelude::*;

fn tiny_models() -> ModelsConfig {
    let mut c = ModelsConfig::default();
    c.weather_model.encoder_hidden = vec![4, 4];
    c.weather_model.decoder_hidden = vec![4, 4];
    c.weather_model.encoder_kernels = vec![3, 1];
    c.weather_model.decoder_kernels = vec![3, 1];
    c.weather_model.t_in = 3;
    c.weather_model.t_out = 2;
    c.convlstm.encoder_hidden = vec![1, 4];
    c.convlstm.encoder_kernels = vec![3, 1];
    c.convlstm.t_in = 3;
    c.convlstm.t_out = 2;
    c.unet.base_channels = 2;
    c.unet.depth = 1;
    c.unet.t_in = 3;
    c.unet.t_out = 2;
    c.sma.t_in = 4;
    c.sma.t_out = 2;
    c
}

fn tiny_batches(seed: u64) -> Vec<Batch> {
    let s = synth_advection(6, 6, 20, 3, seed).unwrap();
    let w = make_windows(&s, 3, 2, "temperature").unwrap();
    assemble_batches(&s, &w[..8], 4, seed).unwrap()
}

#[test]
fn gradcheck_linear_is_exact() {
    assert!(check_linear(1).max_rel_error < 1e-8);
}

#[test]
fn gradcheck_convlstm_step() {
    let r = check_convlstm_step(4, 2);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    assert!(r.checked > 0);
}

#[test]
fn gradcheck_attention_both_axes() {
    for axis in [SoftmaxAxis::Feature, SoftmaxAxis::Spatial] {
        let r = check_attention(4, 3, axis, 3);
        assert!(r.max_rel_error < 1e-4, "{axis:?}: {r:?}");
    }
}

#[test]
fn gradcheck_output_conv_and_unet() {
    let r = check_output_conv(4, 4);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    let r = check_unet(5, 5);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn gradcheck_whole_weather_model() {
    let r = check_weather_model(4, 2, 6);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn vanishing_learning_rate_is_a_noop() {
    let cfg = tiny_models();
    let mut model = build_model(ModelKind::WeatherModel, &cfg, 3).unwrap();
    let batch = &tiny_batches(1)[0];
    let loss_of = |m: &dyn forecast_core::nets::Forecaster| {
        let p = predict(m, batch).unwrap();
        mse_loss(&p, &batch.targets).unwrap()
    };
    let before = loss_of(model.as_ref());
    let mut g = Graph::new();
    let out = model.forward(&mut g, batch).unwrap();
    let t = g.constant(batch.targets.clone().into_dyn());
    let l = g.mse(out.prediction, t);
    let grads = g.backward(l).params(model.params());
    let mut opt = Adam::new(model.params(), 1e-12);
    opt.update(model.params_mut(), &grads);
    assert!((loss_of(model.as_ref()) - before).abs() < 1e-9);
}

fn grads_from(values: Vec<f64>) -> ParamGrads {
    let mut store = ParamStore::new();
    let n = values.len();
    let id = store.add("p", ArrayD::zeros(IxDyn(&[n])));
    let mut g = ParamGrads::zeros(&store);
    g.get_mut(id).assign(&ArrayD::from_shape_vec(IxDyn(&[n]), values).unwrap());
    g
}

proptest! {
    #[test]
    fn clipping_never_grows_or_turns(v in prop::collection::vec(-100.0f64..100.0, 1..20), th in 0.01f64..50.0) {
        let mut g = grads_from(v.clone());
        let before = g.global_norm();
        clip_gradients(&mut g, th);
        let after = g.global_norm();
        prop_assert!(after <= before + 1e-12);
        prop_assert!(after <= th.max(before.min(th)) * (1.0 + 1e-12));
        let clipped: Vec<f64> = g.iter().next().unwrap().iter().copied().collect();
        if before > 0.0 {
            let cos = v.iter().zip(&clipped).map(|(a, b)| a * b).sum::<f64>() / (before * after);
            prop_assert!((cos - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn early_stopping_keeps_minimum(vals in prop::collection::vec(0.0f64..10.0, 1..30), patience in 1usize..5) {
        let mut s = EarlyStopping::new(patience);
        let mut seen = Vec::new();
        for (i, &v) in vals.iter().enumerate() {
            seen.push(v);
            if s.observe(i + 1, v).stop {
                break;
            }
        }
        let (epoch, best) = s.best().unwrap();
        let min = seen.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(best, min);
        prop_assert_eq!(seen[epoch - 1], min);
    }
}

#[test]
fn fit_is_reproducible_and_restores_best() {
    let cfg = tiny_models();
    let batches = tiny_batches(2);
    let tc = TrainConfig {
        max_epochs: 4,
        lr: 5e-3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = build_model(ModelKind::WeatherModel, &cfg, 3).unwrap();
        let r = fit(m.as_mut(), &batches[..1].to_vec(), &batches[1..].to_vec(), &tc).unwrap();
        (r, m)
    };
    let (a, ma) = run();
    let (b, _) = run();
    assert_eq!(a.train_losses, b.train_losses);
    assert_eq!(a.val_losses, b.val_losses);
    let min = a.val_losses.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val, min);
    // The returned parameters are the best epoch's.
    let again = evaluate(ma.as_ref(), &batches[1..].to_vec()).unwrap();
    assert_eq!(again.mse, a.best_val);
}

#[test]
fn nan_loss_aborts_with_diagnostics() {
    let cfg = tiny_models();
    let mut batches = tiny_batches(3);
    batches[0].inputs[[0, 0, 0, 0, 0]] = f64::NAN;
    let mut m = build_model(ModelKind::WeatherModel, &cfg, 3).unwrap();
    let tc = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    match fit(m.as_mut(), &batches, &batches, &tc) {
        Err(Error::NonFiniteLoss { epoch, batch, lr }) => {
            assert_eq!((epoch, batch, lr), (1, 0, 1e-3));
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

fn fabricated(pred_offset: f64, min: f64, max: f64) -> Batch {
    let targets = Array4::from_shape_fn((1, 2, 2, 2), |(_, t, i, j)| 0.1 * (t + i + j) as f64);
    let mut inputs = Array5::zeros((1, 4, 1, 2, 2));
    // SMA with T_in = 4 over a constant history predicts that constant.
    inputs.fill(pred_offset);
    Batch {
        inputs,
        targets,
        norm: NormalizationRecord {
            feature_names: vec!["t".into()],
            min: vec![min],
            max: vec![max],
            degenerate: vec![min == max],
            target_feature: 0,
        },
        starts: vec![0],
        anchors: vec![chrono::DateTime::UNIX_EPOCH],
    }
}

#[test]
fn physical_mae_scales_with_record_range() {
    let cfg = tiny_models();
    let m = build_model(ModelKind::Sma, &cfg, 1).unwrap();
    let one = vec![fabricated(0.25, 270.0, 290.0)];
    let r = evaluate(m.as_ref(), &one).unwrap();
    assert!((r.mae_physical - r.mae * 20.0).abs() < 1e-12);
    assert!((r.mse_physical - r.mse * 400.0).abs() < 1e-10);

    // Two records with different ranges: element-weighted oracle.
    let two = vec![fabricated(0.25, 270.0, 290.0), fabricated(0.5, 0.0, 3.0)];
    let r = evaluate(m.as_ref(), &two).unwrap();
    let mae_a = evaluate(m.as_ref(), &two[..1].to_vec()).unwrap().mae;
    let mae_b = evaluate(m.as_ref(), &two[1..].to_vec()).unwrap().mae;
    assert!((r.mae_physical - (mae_a * 20.0 + mae_b * 3.0) / 2.0).abs() < 1e-12);

    // Constant targets carry no scale and are excluded.
    let three = vec![fabricated(0.25, 270.0, 290.0), fabricated(0.5, 5.0, 5.0)];
    let r = evaluate(m.as_ref(), &three).unwrap();
    assert_eq!(r.degenerate_batches, 1);
    assert!((r.mae_physical - mae_a * 20.0).abs() < 1e-12);
}

fn suite(seed: u64) -> ExperimentSuite {
    let series = synth_advection(6, 6, 60, 3, 4).unwrap();
    let splits = rolling_splits_indexed(60, 40, 20, Fractions::default()).unwrap();
    assert_eq!(splits.len(), 2);
    let cfg = tiny_models();
    let tc = TrainConfig {
        max_epochs: 2,
        seed,
        ..TrainConfig::default()
    };
    run_experiments(&ExperimentPlan {
        series: &series,
        splits: &splits,
        models: &[ModelKind::WeatherModel, ModelKind::Sma],
        models_cfg: &cfg,
        train_cfg: &tc,
        target: "temperature",
        out_dir: None,
    })
    .unwrap()
}

#[test]
fn two_windows_two_models() {
    let a = suite(1);
    assert_eq!(a.results.len(), 4);
    assert!(a.results.iter().all(|r| r.error.is_none()));
    assert_eq!(a.summary.rows.len(), 2);
    assert!(a.summary.rows.iter().all(|r| r.test.len() == 2 && r.test.iter().all(Option::is_some)));
    let b = suite(1);
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.summary.to_csv(), b.summary.to_csv());
}

#[test]
fn failed_experiment_is_recorded_not_fatal() {
    let series = synth_advection(6, 6, 60, 3, 4).unwrap();
    let mut splits = rolling_splits_indexed(60, 40, 20, Fractions::default()).unwrap();
    // Four validation steps cannot hold a T_out = 8 target.
    let mut cfg = tiny_models();
    cfg.sma.t_out = 8;
    splits.truncate(1);
    let tc = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let s = run_experiments(&ExperimentPlan {
        series: &series,
        splits: &splits,
        models: &[ModelKind::Sma, ModelKind::Unet],
        models_cfg: &cfg,
        train_cfg: &tc,
        target: "temperature",
        out_dir: None,
    })
    .unwrap();
    assert!(s.results[0].error.is_some());
    assert!(s.results[1].error.is_none());
    assert_eq!(s.summary.rows[0].test[0], None);
}

#[test]
fn run_dir_gets_losses_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let series = synth_advection(6, 6, 60, 3, 4).unwrap();
    let splits = rolling_splits_indexed(60, 40, 20, Fractions::default()).unwrap();
    let cfg = tiny_models();
    let tc = TrainConfig {
        max_epochs: 2,
        warm_start: true,
        ..TrainConfig::default()
    };
    let s = run_experiments(&ExperimentPlan {
        series: &series,
        splits: &splits[..1],
        models: &[ModelKind::Convlstm],
        models_cfg: &cfg,
        train_cfg: &tc,
        target: "temperature",
        out_dir: Some(dir.path()),
    })
    .unwrap();
    let r = &s.results[0];
    let csv = std::fs::read_to_string(dir.path().join("exp00_convlstm_losses.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + r.train_losses.len());
    let ck = load_checkpoint(r.checkpoint.as_ref().unwrap()).unwrap();
    assert_eq!(ck.kind, ModelKind::Convlstm);
    assert_eq!(ck.meta.target, "temperature");
    s.summary.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(text.contains("convlstm"));
}

#[test]
fn checkpoint_reload_predicts_the_same() {
    let cfg = tiny_models();
    let batch = &tiny_batches(5)[0];
    let m = build_model(ModelKind::WeatherModel, &cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.ckpt");
    let meta = CheckpointMeta {
        train_seed: 0,
        experiment_id: None,
        target: "temperature".into(),
        feature_names: vec!["temperature".into(), "u_wind".into(), "v_wind".into()],
    };
    save_checkpoint(&p, m.as_ref(), None, &meta).unwrap();
    let back = load_checkpoint(&p).unwrap().into_model().unwrap();
    let a = predict(m.as_ref(), batch).unwrap();
    let b = predict(back.as_ref(), batch).unwrap();
    let diff = (&a - &b).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    assert!(diff < 1e-5, "max diff {diff}");
}
