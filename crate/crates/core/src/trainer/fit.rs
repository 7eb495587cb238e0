//! Training loop with early stopping, and batch evaluation.

use ndarray::{Array4, Ix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{mae_loss, mse_loss};
use super::optim::{clip_gradients, Adam};
use crate::autograd::Graph;
use crate::datastore::{Batch, BatchSource};
use crate::error::{Error, Result};
use crate::nets::Forecaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive validation increases tolerated before stopping.
    pub patience: usize,
    /// Clip the global gradient norm of recurrent models.
    pub clip: bool,
    pub clip_threshold: f64,
    /// Seeds batch shuffling.
    pub seed: u64,
    /// Draw a fresh batch order every epoch.
    pub reshuffle: bool,
    /// Continue from the previous window's parameters in rolling runs.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 50,
            patience: 4,
            clip: true,
            clip_threshold: 5.0,
            seed: 0,
            reshuffle: true,
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience, batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(Error::Config(format!(
                "clip threshold must be positive, got {}",
                self.clip_threshold
            )));
        }
        Ok(())
    }
}

/// Stops after `patience` consecutive strict increases of the validation
/// loss; any non-increase resets the count.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    increases: usize,
    previous: Option<f64>,
    best: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "patience must be >= 1");
        Self {
            patience,
            increases: 0,
            previous: None,
            best: None,
        }
    }

    /// Records the validation loss of `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, val: f64) -> Verdict {
        match self.previous {
            Some(p) if val > p => self.increases += 1,
            _ => self.increases = 0,
        }
        self.previous = Some(val);
        let improved = self.best.is_none_or(|(_, b)| val < b);
        if improved {
            self.best = Some((epoch, val));
        }
        Verdict {
            improved,
            stop: self.increases >= self.patience,
        }
    }

    /// `(epoch, loss)` of the lowest loss seen, earliest on ties.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Error summary over a set of batches. Physical metrics skip batches whose
/// target was constant, since their scale cannot be recovered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub mse_physical: f64,
    pub mae_physical: f64,
    pub elements: usize,
    pub degenerate_batches: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    sq: f64,
    abs: f64,
    n: usize,
    sq_phys: f64,
    abs_phys: f64,
    n_phys: usize,
    degenerate: usize,
}

impl Accum {
    fn add(&mut self, o: &Accum) {
        self.sq += o.sq;
        self.abs += o.abs;
        self.n += o.n;
        self.sq_phys += o.sq_phys;
        self.abs_phys += o.abs_phys;
        self.n_phys += o.n_phys;
        self.degenerate += o.degenerate;
    }

    fn batch(pred: &Array4<f64>, batch: &Batch) -> Result<Self> {
        let n = pred.len();
        let mse = mse_loss(pred, &batch.targets)?;
        let mae = mae_loss(pred, &batch.targets)?;
        let mut a = Accum {
            sq: mse * n as f64,
            abs: mae * n as f64,
            n,
            ..Accum::default()
        };
        if batch.norm.degenerate[batch.norm.target_feature] {
            a.degenerate = 1;
        } else {
            let r = batch.norm.target_range();
            a.sq_phys = a.sq * r * r;
            a.abs_phys = a.abs * r;
            a.n_phys = n;
        }
        Ok(a)
    }

    fn metrics(&self) -> Metrics {
        let div = |x: f64, n: usize| if n == 0 { f64::NAN } else { x / n as f64 };
        Metrics {
            mse: div(self.sq, self.n),
            mae: div(self.abs, self.n),
            mse_physical: div(self.sq_phys, self.n_phys),
            mae_physical: div(self.abs_phys, self.n_phys),
            elements: self.n,
            degenerate_batches: self.degenerate,
        }
    }
}

/// Runs the model forward without gradients; `[b, T_out, M, N]`.
pub fn predict(model: &dyn Forecaster, batch: &Batch) -> Result<Array4<f64>> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, batch)?;
    g.value(out.prediction)
        .clone()
        .into_dimensionality::<Ix4>()
        .map_err(|e| Error::Shape(format!("prediction is not 4-D: {e}")))
}

/// Metrics of `model` on every batch of `source` (epoch 0's plan).
pub fn evaluate(model: &dyn Forecaster, source: &dyn BatchSource) -> Result<Metrics> {
    let plan = source.epoch_plan(0)?;
    if plan.is_empty() {
        return Err(Error::Window("no batches to evaluate".into()));
    }
    let parts = plan
        .par_iter()
        .map(|members| {
            let batch = source.load(members)?;
            Accum::batch(&predict(model, &batch)?, &batch)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accum::default();
    for p in &parts {
        total.add(p);
    }
    Ok(total.metrics())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
    pub optimizer: Adam,
}

/// Trains with Adam on normalized MSE and leaves the parameters of the
/// epoch with the lowest validation loss in `model`.
pub fn fit(
    model: &mut dyn Forecaster,
    train: &dyn BatchSource,
    val: &dyn BatchSource,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut opt = Adam::new(model.params(), cfg.lr);
    let clip = (cfg.clip && model.kind().is_recurrent()).then_some(cfg.clip_threshold);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params().clone();
    let mut best_opt = opt.clone();
    let (mut train_losses, mut val_losses) = (Vec::new(), Vec::new());
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let plan = train.epoch_plan(epoch - 1)?;
        if plan.is_empty() {
            return Err(Error::Window("no training batches".into()));
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for (bi, members) in plan.iter().enumerate() {
            let batch = train.load(members)?;
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch)?;
            let truth = g.constant(batch.targets.clone().into_dyn());
            let loss = g.mse(out.prediction, truth);
            let value = g.scalar(loss);
            let non_finite = Error::NonFiniteLoss {
                epoch,
                batch: bi,
                lr: opt.lr,
            };
            if !value.is_finite() {
                return Err(non_finite);
            }
            let mut grads = g.backward(loss).params(model.params());
            if !grads.is_finite() {
                return Err(non_finite);
            }
            if let Some(threshold) = clip {
                clip_gradients(&mut grads, threshold);
            }
            opt.update(model.params_mut(), &grads);
            let n = batch.targets.len();
            sum += value * n as f64;
            count += n;
        }
        let train_loss = sum / count as f64;
        let val_loss = evaluate(&*model, val)?.mse;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: plan.len(),
                lr: opt.lr,
            });
        }
        log::info!("{} epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}", model.kind());
        train_losses.push(train_loss);
        val_losses.push(val_loss);
        let verdict = stopper.observe(epoch, val_loss);
        if verdict.improved {
            best_params.copy_from(model.params());
            best_opt = opt.clone();
        }
        if verdict.stop {
            stopped_early = true;
            break;
        }
    }
    model.params_mut().copy_from(&best_params);
    let (best_epoch, best_val) = stopper.best().expect("at least one epoch ran");
    Ok(FitResult {
        train_losses,
        val_losses,
        best_epoch,
        best_val,
        stopped_early,
        optimizer: best_opt,
    })
}
